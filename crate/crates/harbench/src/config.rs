//! Workflow configuration.
//!
//! The whole run is driven by a plain-text `key = value` file grouped in
//! four sections (`[data]`, `[treatment]`, `[preprocessing]`, `[training]`).
//! Every key has a documented default; unknown keys and malformed values are
//! rejected with the offending line. A loaded [`PipelineConfig`] is immutable
//! and safe to share read-only across workers.

use crate::{Error, Result};
use serde::Serialize;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;

macro_rules! config_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }

            pub fn parse_token(token: &str) -> std::result::Result<Self, String> {
                match token {
                    $($token => Ok($name::$variant),)+
                    other => Err(format!(
                        concat!("invalid value `{}`; expected one of: ", $($token, " "),+),
                        other
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }
    };
}

config_enum! {
    /// Column layout of the input file: `t` timestamp, `d` sensor data
    /// block, `c` class label, `p` subject id — in that order.
    HeaderType {
        Tdc => "tdc",
        Tdcp => "tdcp",
        Dc => "dc",
        Dcp => "dcp",
    }
}

impl HeaderType {
    pub fn has_timestamp(&self) -> bool {
        matches!(self, HeaderType::Tdc | HeaderType::Tdcp)
    }

    pub fn has_subject(&self) -> bool {
        matches!(self, HeaderType::Tdcp | HeaderType::Dcp)
    }

    /// Number of non-sensor columns implied by the layout.
    pub fn fixed_columns(&self) -> usize {
        1 + usize::from(self.has_timestamp()) + usize::from(self.has_subject())
    }
}

config_enum! {
    /// Attribute used to group exploratory statistics.
    GroupBy {
        Class => "CLASS",
        Subject => "P_ID",
    }
}

config_enum! {
    /// Model-facing data representation.
    DataTreatment {
        Segmentation => "segmentation",
        Raw => "raw",
        FeaturesExtraction => "features_extraction",
    }
}

config_enum! {
    FeaturesDomain {
        Statistical => "statistical",
        Spectral => "spectral",
        Temporal => "temporal",
        All => "all",
    }
}

config_enum! {
    /// Classical models available to the grid-search engine.
    MlModel {
        Knn => "kNN",
        Wknn => "wkNN",
        Lda => "LDA",
        Qda => "QDA",
        Svm => "SVM",
        Rf => "RF",
        Dt => "DT",
    }
}

config_enum! {
    DlModel {
        Cnn => "CNN",
    }
}

config_enum! {
    NormalizationMethod {
        None => "none",
        MinMax => "minmax",
        Robust => "robust",
        Standard => "standard",
    }
}

config_enum! {
    SplitMethod {
        Intra => "intra",
        Inter => "inter",
    }
}

config_enum! {
    SelectionMethod {
        Variance => "variance",
        L1 => "l1",
        TreeBased => "tree_based",
        Recursive => "recursive",
    }
}

config_enum! {
    BalancingMethod {
        None => "none",
        RandomUnder => "random_under",
        NearMiss => "near_miss",
        EditedNn => "edited_nn",
        RandomOver => "random_over",
        Smote => "smote",
        Adasyn => "adasyn",
        KmeansSmote => "kmeans_smote",
    }
}

config_enum! {
    /// Missing-value substitution method.
    SubMethod {
        Mean => "mean",
        Forward => "forward",
        Backward => "backward",
        Constant => "constant",
        Interpolate => "interpolate",
    }
}

config_enum! {
    FilterKind {
        None => "none",
        Lowpass => "lowpass",
        Highpass => "highpass",
        Bandpass => "bandpass",
        Bandstop => "bandstop",
    }
}

/// Fully defaulted, validated workflow configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    // [data]
    pub path: String,
    pub separator: char,
    pub has_header: bool,
    pub header_type: HeaderType,
    /// Sampling frequency in Hz; may be omitted when the file carries
    /// timestamps, in which case it is inferred at load time.
    pub sampling_frequency: Option<u32>,
    pub group_by: GroupBy,

    // [treatment]
    pub data_treatment: DataTreatment,
    /// Window length in seconds; required for windowed treatments.
    pub time_window: Option<f64>,
    /// Overlap between consecutive windows, in seconds.
    pub overlap: f64,
    pub features_domain: FeaturesDomain,
    pub sub_method: SubMethod,
    pub constant_value: f64,
    pub filter: FilterKind,
    pub filter_order: usize,
    /// Cutoff frequencies in Hz: one for lowpass/highpass, two for
    /// bandpass/bandstop.
    pub cut: Vec<f64>,

    // [preprocessing]
    pub normalization_method: NormalizationMethod,
    pub split_method: SplitMethod,
    pub test_size: f64,
    pub k_fold: usize,
    pub features_selection: bool,
    pub selection_method: SelectionMethod,
    pub n_features_to_select: Option<usize>,
    pub data_balancing_method: BalancingMethod,
    pub drop_subjects: Vec<String>,
    pub drop_activities: Vec<String>,
    pub drop_sessions: Vec<String>,
    /// Subjects forming the test set under the inter split; empty = pick a
    /// random subject subset of roughly `test_size` share.
    pub test_subjects: Vec<String>,

    // [training]
    pub use_ml: Vec<MlModel>,
    pub use_dl: Vec<DlModel>,
    pub epochs: usize,
    pub loss_threshold: f64,
    pub use_features: bool,
    pub seed: u64,
}

impl PipelineConfig {
    /// Baseline configuration with documented defaults for everything that
    /// has one. `path` and `header_type` have no default and must be given.
    pub fn defaults(path: impl Into<String>, header_type: HeaderType) -> Self {
        PipelineConfig {
            path: path.into(),
            separator: ',',
            has_header: false,
            header_type,
            sampling_frequency: None,
            group_by: GroupBy::Class,
            data_treatment: DataTreatment::FeaturesExtraction,
            time_window: None,
            overlap: 0.0,
            features_domain: FeaturesDomain::All,
            sub_method: SubMethod::Mean,
            constant_value: 0.0,
            filter: FilterKind::Lowpass,
            filter_order: 4,
            cut: vec![20.0],
            normalization_method: NormalizationMethod::Robust,
            split_method: SplitMethod::Intra,
            test_size: 0.25,
            k_fold: 3,
            features_selection: true,
            selection_method: SelectionMethod::TreeBased,
            n_features_to_select: None,
            data_balancing_method: BalancingMethod::None,
            drop_subjects: Vec::new(),
            drop_activities: Vec::new(),
            drop_sessions: Vec::new(),
            test_subjects: Vec::new(),
            use_ml: vec![
                MlModel::Knn,
                MlModel::Lda,
                MlModel::Qda,
                MlModel::Rf,
                MlModel::Dt,
            ],
            use_dl: vec![DlModel::Cnn],
            epochs: 100,
            loss_threshold: 0.4,
            use_features: true,
            seed: 42,
        }
    }

    /// Window length in samples for a given sampling frequency.
    pub fn window_len_samples(&self, sampling_frequency: u32) -> Option<usize> {
        self.time_window
            .map(|tw| (tw * sampling_frequency as f64).round() as usize)
    }

    /// Start-index advance between consecutive windows, in samples.
    pub fn step_samples(&self, sampling_frequency: u32) -> Option<usize> {
        self.time_window
            .map(|tw| ((tw - self.overlap) * sampling_frequency as f64).round() as usize)
    }

    fn needs_windows(&self) -> bool {
        matches!(
            self.data_treatment,
            DataTreatment::Segmentation | DataTreatment::FeaturesExtraction
        )
    }

    /// Structural invariants that do not need the dataset.
    fn check_structure(&self) -> Result<()> {
        if let Some(tw) = self.time_window {
            if tw <= 0.0 || !tw.is_finite() {
                return Err(Error::config("time_window must be a positive number"));
            }
            if self.overlap >= tw {
                return Err(Error::config(format!(
                    "overlap < time_window violated: overlap={} >= time_window={}",
                    self.overlap, tw
                )));
            }
        } else if self.needs_windows() {
            return Err(Error::config(format!(
                "time_window is required when data_treatment = {}",
                self.data_treatment
            )));
        }
        if self.overlap < 0.0 || !self.overlap.is_finite() {
            return Err(Error::config("overlap must be >= 0"));
        }
        if let Some(sf) = self.sampling_frequency {
            if sf == 0 {
                return Err(Error::config("sampling_frequency must be a positive integer"));
            }
            self.check_against_frequency(sf)?;
        }
        match self.filter {
            FilterKind::None => {}
            FilterKind::Lowpass | FilterKind::Highpass => {
                if self.cut.len() != 1 {
                    return Err(Error::config(format!(
                        "filter `{}` requires exactly one cut value, got {}",
                        self.filter,
                        self.cut.len()
                    )));
                }
            }
            FilterKind::Bandpass | FilterKind::Bandstop => {
                if self.cut.len() != 2 {
                    return Err(Error::config(format!(
                        "filter `{}` requires exactly two cut values, got {}",
                        self.filter,
                        self.cut.len()
                    )));
                }
                if self.cut[0] >= self.cut[1] {
                    return Err(Error::config(format!(
                        "cut values must satisfy low < high, got {} >= {}",
                        self.cut[0], self.cut[1]
                    )));
                }
            }
        }
        if self.filter != FilterKind::None {
            if self.filter_order == 0 {
                return Err(Error::config("filter_order must be a positive integer"));
            }
            for &c in &self.cut {
                if c <= 0.0 || !c.is_finite() {
                    return Err(Error::config("cut frequencies must be positive"));
                }
            }
        }
        if !(3..=10).contains(&self.k_fold) {
            return Err(Error::config(format!(
                "k_fold must be in [3, 10], got {}",
                self.k_fold
            )));
        }
        if !(self.test_size > 0.0 && self.test_size < 1.0) {
            return Err(Error::config(format!(
                "test_size must lie in (0, 1), got {}",
                self.test_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be a positive integer"));
        }
        if self.loss_threshold < 0.0 || !self.loss_threshold.is_finite() {
            return Err(Error::config("loss_threshold must be >= 0"));
        }
        if self.features_selection && self.selection_method == SelectionMethod::Recursive {
            match self.n_features_to_select {
                None => {
                    return Err(Error::config(
                        "n_features_to_select is required with selection_method = recursive",
                    ))
                }
                Some(0) => {
                    return Err(Error::config("n_features_to_select must be >= 1"));
                }
                Some(_) => {}
            }
        }
        if let Some(0) = self.n_features_to_select {
            return Err(Error::config("n_features_to_select must be >= 1"));
        }
        Ok(())
    }

    /// Constraints that involve the sampling frequency; called again at
    /// cross-validation time when the frequency was inferred from timestamps.
    pub fn check_against_frequency(&self, sampling_frequency: u32) -> Result<()> {
        let nyquist = sampling_frequency as f64 / 2.0;
        if self.filter != FilterKind::None {
            for &c in &self.cut {
                if c >= nyquist {
                    return Err(Error::config(format!(
                        "cut frequency {} Hz violates the Nyquist limit {} Hz (sampling_frequency = {} Hz)",
                        c, nyquist, sampling_frequency
                    )));
                }
            }
        }
        if self.needs_windows() {
            let w_len = self.window_len_samples(sampling_frequency).unwrap_or(0);
            if w_len < 1 {
                return Err(Error::config(
                    "time_window * sampling_frequency must be at least one sample",
                ));
            }
            let step = self.step_samples(sampling_frequency).unwrap_or(0);
            if step < 1 {
                return Err(Error::config(
                    "(time_window - overlap) * sampling_frequency must be at least one sample",
                ));
            }
        }
        Ok(())
    }

    /// Non-fatal advisories derivable from the config alone.
    pub fn structural_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.test_size < 0.15 || self.test_size > 0.25 {
            warnings.push(format!(
                "test_size = {} is outside the customary [0.15, 0.25] band",
                self.test_size
            ));
        }
        if self.n_features_to_select.is_some()
            && self.selection_method != SelectionMethod::Recursive
        {
            warnings.push(format!(
                "n_features_to_select is only meaningful with selection_method = recursive (current: {})",
                self.selection_method
            ));
        }
        if !self.test_subjects.is_empty() && self.split_method == SplitMethod::Intra {
            warnings.push("test_subjects is ignored with split_method = intra".to_string());
        }
        warnings
    }

    /// Cross-check the config against the loaded dataset. Fatal mismatches
    /// error out; the rest come back as warnings.
    pub fn validate(&self, meta: &DatasetMeta) -> Result<Vec<String>> {
        let mut warnings = self.structural_warnings();
        self.check_against_frequency(meta.sampling_frequency)?;
        if let (Some(cfg_sf), Some(inferred)) = (self.sampling_frequency, meta.inferred_frequency)
        {
            let rel = (cfg_sf as f64 - inferred as f64).abs() / cfg_sf as f64;
            if rel > 0.05 {
                warnings.push(format!(
                    "configured sampling_frequency {} Hz differs from the timestamp-inferred {} Hz",
                    cfg_sf, inferred
                ));
            }
        }
        if self.split_method == SplitMethod::Inter {
            if !meta.has_subjects {
                return Err(Error::config(
                    "subject column required: split_method = inter needs a header_type with `p`",
                ));
            }
            if meta.subject_ids.len() < 2 {
                return Err(Error::config(
                    "split_method = inter requires at least two distinct subjects",
                ));
            }
            if !self.test_subjects.is_empty() {
                let known: HashSet<&str> = meta.subject_ids.iter().map(String::as_str).collect();
                let unknown: Vec<&str> = self
                    .test_subjects
                    .iter()
                    .map(String::as_str)
                    .filter(|s| !known.contains(s))
                    .collect();
                if unknown.len() == self.test_subjects.len() {
                    return Err(Error::config(format!(
                        "none of the configured test_subjects exist in the dataset: {}",
                        unknown.join(", ")
                    )));
                }
                if !unknown.is_empty() {
                    warnings.push(format!(
                        "unknown test_subjects ignored: {}",
                        unknown.join(", ")
                    ));
                }
                if self
                    .test_subjects
                    .iter()
                    .filter(|s| known.contains(s.as_str()))
                    .count()
                    == meta.subject_ids.len()
                {
                    return Err(Error::config(
                        "test_subjects covers every subject; no training data would remain",
                    ));
                }
            }
        }
        if !self.drop_sessions.is_empty() && !meta.has_sessions {
            return Err(Error::config(
                "drop_sessions requested but the dataset has no session column",
            ));
        }
        for (key, requested, known) in [
            ("drop_subjects", &self.drop_subjects, &meta.subject_ids),
            ("drop_activities", &self.drop_activities, &meta.class_ids),
            ("drop_sessions", &self.drop_sessions, &meta.session_ids),
        ] {
            let known: HashSet<&str> = known.iter().map(String::as_str).collect();
            let unknown: Vec<&str> = requested
                .iter()
                .map(String::as_str)
                .filter(|s| !known.contains(s))
                .collect();
            if !unknown.is_empty() {
                warnings.push(format!("{key}: unknown ids ignored: {}", unknown.join(", ")));
            }
        }
        if self.features_selection && self.data_treatment != DataTreatment::FeaturesExtraction {
            return Err(Error::config(format!(
                "features_selection requires data_treatment = features_extraction (current: {})",
                self.data_treatment
            )));
        }
        if self.needs_windows()
            && matches!(
                self.features_domain,
                FeaturesDomain::Spectral | FeaturesDomain::All
            )
            && self.data_treatment == DataTreatment::FeaturesExtraction
        {
            let w_len = self
                .window_len_samples(meta.sampling_frequency)
                .unwrap_or(0);
            if w_len < 8 {
                return Err(Error::config(format!(
                    "spectral features need windows of at least 8 samples, got {w_len}"
                )));
            }
        }
        if meta.class_ids.len() < 2 {
            warnings.push("dataset contains a single activity class".to_string());
        }
        if !meta.has_subjects && self.group_by == GroupBy::Subject {
            warnings.push(
                "group_by = P_ID with no subject column; all rows fall in one implicit subject"
                    .to_string(),
            );
        }
        if self.use_dl.contains(&DlModel::Cnn)
            && self.data_treatment == DataTreatment::FeaturesExtraction
            && !self.use_features
        {
            warnings.push(
                "use_features = false has no effect: with features_extraction the CNN consumes the extracted features".to_string(),
            );
        }
        Ok(warnings)
    }

    /// Canonical serialization; loading it back yields an identical config.
    pub fn to_ini_string(&self) -> String {
        fn join_f64(values: &[f64]) -> String {
            values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        }
        fn join_str(values: &[String]) -> String {
            values.join(", ")
        }

        let mut out = String::new();
        out.push_str("[data]\n");
        out.push_str(&format!("path = {}\n", self.path));
        let sep = if self.separator == '\t' {
            "\\t".to_string()
        } else {
            self.separator.to_string()
        };
        out.push_str(&format!("separator = {sep}\n"));
        out.push_str(&format!("has_header = {}\n", self.has_header));
        out.push_str(&format!("header_type = {}\n", self.header_type));
        if let Some(sf) = self.sampling_frequency {
            out.push_str(&format!("sampling_frequency = {sf}\n"));
        }
        out.push_str(&format!("group_by = {}\n", self.group_by));

        out.push_str("\n[treatment]\n");
        out.push_str(&format!("data_treatment = {}\n", self.data_treatment));
        if let Some(tw) = self.time_window {
            out.push_str(&format!("time_window = {tw}\n"));
        }
        out.push_str(&format!("overlap = {}\n", self.overlap));
        out.push_str(&format!("features_domain = {}\n", self.features_domain));
        out.push_str(&format!("sub_method = {}\n", self.sub_method));
        out.push_str(&format!("constant_value = {}\n", self.constant_value));
        out.push_str(&format!("filter = {}\n", self.filter));
        out.push_str(&format!("filter_order = {}\n", self.filter_order));
        out.push_str(&format!("cut = {}\n", join_f64(&self.cut)));

        out.push_str("\n[preprocessing]\n");
        out.push_str(&format!(
            "normalization_method = {}\n",
            self.normalization_method
        ));
        out.push_str(&format!("split_method = {}\n", self.split_method));
        out.push_str(&format!("test_size = {}\n", self.test_size));
        out.push_str(&format!("k_fold = {}\n", self.k_fold));
        out.push_str(&format!("features_selection = {}\n", self.features_selection));
        out.push_str(&format!("selection_method = {}\n", self.selection_method));
        if let Some(n) = self.n_features_to_select {
            out.push_str(&format!("n_features_to_select = {n}\n"));
        }
        out.push_str(&format!(
            "data_balancing_method = {}\n",
            self.data_balancing_method
        ));
        if !self.drop_subjects.is_empty() {
            out.push_str(&format!("drop_subjects = {}\n", join_str(&self.drop_subjects)));
        }
        if !self.drop_activities.is_empty() {
            out.push_str(&format!(
                "drop_activities = {}\n",
                join_str(&self.drop_activities)
            ));
        }
        if !self.drop_sessions.is_empty() {
            out.push_str(&format!("drop_sessions = {}\n", join_str(&self.drop_sessions)));
        }
        if !self.test_subjects.is_empty() {
            out.push_str(&format!("test_subjects = {}\n", join_str(&self.test_subjects)));
        }

        out.push_str("\n[training]\n");
        let ml: Vec<String> = self.use_ml.iter().map(|m| m.to_string()).collect();
        out.push_str(&format!("use_ml = {}\n", ml.join(", ")));
        let dl: Vec<String> = self.use_dl.iter().map(|m| m.to_string()).collect();
        out.push_str(&format!("use_dl = {}\n", dl.join(", ")));
        out.push_str(&format!("epochs = {}\n", self.epochs));
        out.push_str(&format!("loss_threshold = {}\n", self.loss_threshold));
        out.push_str(&format!("use_features = {}\n", self.use_features));
        out.push_str(&format!("seed = {}\n", self.seed));
        out
    }
}

/// Summary of a loaded dataset used for config cross-validation.
#[derive(Debug, Clone)]
pub struct DatasetMeta {
    pub n_rows: usize,
    pub n_channels: usize,
    pub has_subjects: bool,
    pub has_sessions: bool,
    /// Resolved sampling frequency in Hz (configured or inferred).
    pub sampling_frequency: u32,
    /// Frequency inferred from timestamps, when present.
    pub inferred_frequency: Option<u32>,
    pub class_ids: Vec<String>,
    pub subject_ids: Vec<String>,
    pub session_ids: Vec<String>,
}

const SECTION_DATA: &str = "data";
const SECTION_TREATMENT: &str = "treatment";
const SECTION_PREPROCESSING: &str = "preprocessing";
const SECTION_TRAINING: &str = "training";

fn section_of(key: &str) -> Option<&'static str> {
    match key {
        "path" | "separator" | "has_header" | "header_type" | "sampling_frequency"
        | "group_by" => Some(SECTION_DATA),
        "data_treatment" | "time_window" | "overlap" | "features_domain" | "sub_method"
        | "constant_value" | "filter" | "filter_order" | "cut" => Some(SECTION_TREATMENT),
        "normalization_method" | "split_method" | "test_size" | "k_fold"
        | "features_selection" | "selection_method" | "n_features_to_select"
        | "data_balancing_method" | "drop_subjects" | "drop_activities" | "drop_sessions"
        | "test_subjects" => Some(SECTION_PREPROCESSING),
        "use_ml" | "use_dl" | "epochs" | "loss_threshold" | "use_features" | "seed" => {
            Some(SECTION_TRAINING)
        }
        _ => None,
    }
}

struct RawItem {
    section: String,
    key: String,
    value: String,
    line: usize,
}

fn parse_ini(text: &str) -> Result<Vec<RawItem>> {
    let mut items = Vec::new();
    let mut section = String::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let col = raw_line.len() - raw_line.trim_start().len() + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let inner = rest.strip_suffix(']').ok_or_else(|| {
                Error::config(format!(
                    "line {line_no}, column {col}: unterminated section header `{line}`"
                ))
            })?;
            section = inner.trim().to_string();
            if section.is_empty() {
                return Err(Error::config(format!(
                    "line {line_no}, column {col}: empty section header"
                )));
            }
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => items.push(RawItem {
                section: section.clone(),
                key: key.trim().to_string(),
                value: value.trim().to_string(),
                line: line_no,
            }),
            None => {
                return Err(Error::config(format!(
                    "line {line_no}, column {col}: expected `key = value`, got `{line}`"
                )))
            }
        }
    }
    Ok(items)
}

fn key_err(key: &str, line: usize, msg: impl fmt::Display) -> Error {
    Error::config(format!("key `{key}` (line {line}): {msg}"))
}

fn parse_bool(key: &str, line: usize, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(key_err(key, line, format!("expected true/false, got `{other}`"))),
    }
}

fn parse_f64(key: &str, line: usize, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| key_err(key, line, format!("expected a number, got `{v}`")))
}

fn parse_usize(key: &str, line: usize, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| key_err(key, line, format!("expected a non-negative integer, got `{v}`")))
}

fn parse_u64(key: &str, line: usize, v: &str) -> Result<u64> {
    v.parse::<u64>()
        .map_err(|_| key_err(key, line, format!("expected a non-negative integer, got `{v}`")))
}

fn parse_u32(key: &str, line: usize, v: &str) -> Result<u32> {
    v.parse::<u32>()
        .map_err(|_| key_err(key, line, format!("expected a positive integer, got `{v}`")))
}

fn parse_separator(key: &str, line: usize, v: &str) -> Result<char> {
    if v == "\\t" {
        return Ok('\t');
    }
    let mut chars = v.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(key_err(
            key,
            line,
            format!("expected a single character (or \\t), got `{v}`"),
        )),
    }
}

fn parse_str_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_f64_list(key: &str, line: usize, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(key, line, s))
        .collect()
}

/// Parse and validate a config from its textual form.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let items = parse_ini(text)?;

    let mut path: Option<String> = None;
    let mut header_type: Option<HeaderType> = None;
    // Placeholder values for the two mandatory keys; overwritten below.
    let mut cfg = PipelineConfig::defaults(String::new(), HeaderType::Dc);
    let mut seen: HashSet<String> = HashSet::new();

    for item in &items {
        let key = item.key.as_str();
        let expected = section_of(key)
            .ok_or_else(|| key_err(key, item.line, "unknown configuration key"))?;
        if item.section != expected {
            return Err(key_err(
                key,
                item.line,
                format!("belongs to section [{expected}], found in [{}]", item.section),
            ));
        }
        if !seen.insert(key.to_string()) {
            return Err(key_err(key, item.line, "duplicate key"));
        }
        let v = item.value.as_str();
        let line = item.line;
        match key {
            "path" => path = Some(v.to_string()),
            "separator" => cfg.separator = parse_separator(key, line, v)?,
            "has_header" => cfg.has_header = parse_bool(key, line, v)?,
            "header_type" => {
                header_type =
                    Some(HeaderType::parse_token(v).map_err(|e| key_err(key, line, e))?)
            }
            "sampling_frequency" => cfg.sampling_frequency = Some(parse_u32(key, line, v)?),
            "group_by" => {
                cfg.group_by = GroupBy::parse_token(v).map_err(|e| key_err(key, line, e))?
            }
            "data_treatment" => {
                cfg.data_treatment =
                    DataTreatment::parse_token(v).map_err(|e| key_err(key, line, e))?
            }
            "time_window" => cfg.time_window = Some(parse_f64(key, line, v)?),
            "overlap" => cfg.overlap = parse_f64(key, line, v)?,
            "features_domain" => {
                cfg.features_domain =
                    FeaturesDomain::parse_token(v).map_err(|e| key_err(key, line, e))?
            }
            "sub_method" => {
                cfg.sub_method = SubMethod::parse_token(v).map_err(|e| key_err(key, line, e))?
            }
            "constant_value" => cfg.constant_value = parse_f64(key, line, v)?,
            "filter" => {
                cfg.filter = FilterKind::parse_token(v).map_err(|e| key_err(key, line, e))?
            }
            "filter_order" => cfg.filter_order = parse_usize(key, line, v)?,
            "cut" => cfg.cut = parse_f64_list(key, line, v)?,
            "normalization_method" => {
                cfg.normalization_method =
                    NormalizationMethod::parse_token(v).map_err(|e| key_err(key, line, e))?
            }
            "split_method" => {
                cfg.split_method =
                    SplitMethod::parse_token(v).map_err(|e| key_err(key, line, e))?
            }
            "test_size" => cfg.test_size = parse_f64(key, line, v)?,
            "k_fold" => cfg.k_fold = parse_usize(key, line, v)?,
            "features_selection" => cfg.features_selection = parse_bool(key, line, v)?,
            "selection_method" => {
                cfg.selection_method =
                    SelectionMethod::parse_token(v).map_err(|e| key_err(key, line, e))?
            }
            "n_features_to_select" => {
                cfg.n_features_to_select = Some(parse_usize(key, line, v)?)
            }
            "data_balancing_method" => {
                cfg.data_balancing_method =
                    BalancingMethod::parse_token(v).map_err(|e| key_err(key, line, e))?
            }
            "drop_subjects" => cfg.drop_subjects = parse_str_list(v),
            "drop_activities" => cfg.drop_activities = parse_str_list(v),
            "drop_sessions" => cfg.drop_sessions = parse_str_list(v),
            "test_subjects" => cfg.test_subjects = parse_str_list(v),
            "use_ml" => {
                let mut models = Vec::new();
                for token in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    models.push(MlModel::parse_token(token).map_err(|e| key_err(key, line, e))?);
                }
                // canonical order, deduplicated
                cfg.use_ml = MlModel::ALL
                    .iter()
                    .copied()
                    .filter(|m| models.contains(m))
                    .collect();
            }
            "use_dl" => {
                let mut models = Vec::new();
                for token in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    models.push(DlModel::parse_token(token).map_err(|e| key_err(key, line, e))?);
                }
                cfg.use_dl = DlModel::ALL
                    .iter()
                    .copied()
                    .filter(|m| models.contains(m))
                    .collect();
            }
            "epochs" => cfg.epochs = parse_usize(key, line, v)?,
            "loss_threshold" => cfg.loss_threshold = parse_f64(key, line, v)?,
            "use_features" => cfg.use_features = parse_bool(key, line, v)?,
            "seed" => cfg.seed = parse_u64(key, line, v)?,
            _ => unreachable!("section_of covers all known keys"),
        }
    }

    cfg.path = path.ok_or_else(|| Error::config("missing required key `path` in [data]"))?;
    cfg.header_type =
        header_type.ok_or_else(|| Error::config("missing required key `header_type` in [data]"))?;
    cfg.check_structure()?;
    Ok(cfg)
}

/// Load and validate a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config(format!("cannot read config file `{}`: {e}", path.display()))
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(extra: &str) -> String {
        format!(
            "[data]\npath = data.csv\nheader_type = dcp\nsampling_frequency = 50\n\
             [treatment]\ntime_window = 2\n{extra}"
        )
    }

    #[test]
    fn derived_step_in_samples() {
        let text = "[data]\npath = data.csv\nheader_type = dcp\nsampling_frequency = 25\n\
                    [treatment]\ntime_window = 2\noverlap = 1\ncut = 5\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.step_samples(25), Some(25));
        assert_eq!(cfg.window_len_samples(25), Some(50));
    }

    #[test]
    fn overlap_must_stay_below_window() {
        let err = parse_config(&minimal("overlap = 2\n")).unwrap_err();
        assert!(err.to_string().contains("overlap < time_window"), "{err}");
    }

    #[test]
    fn missing_filter_order_defaults_to_four() {
        let cfg = parse_config(&minimal("")).unwrap();
        assert_eq!(cfg.filter_order, 4);
        assert_eq!(cfg.cut, vec![20.0]);
        assert_eq!(cfg.test_size, 0.25);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.k_fold, 3);
        assert!((cfg.loss_threshold - 0.4).abs() < 1e-12);
        assert_eq!(cfg.data_balancing_method, BalancingMethod::None);
        assert_eq!(cfg.normalization_method, NormalizationMethod::Robust);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config(&minimal("windowing = yes\n")).unwrap_err();
        assert!(err.to_string().contains("unknown configuration key"), "{err}");
    }

    #[test]
    fn key_in_wrong_section_rejected() {
        let text = "[data]\npath = d.csv\nheader_type = dc\nsampling_frequency = 25\n\
                    test_size = 0.2\n[treatment]\ntime_window = 1\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("[preprocessing]"), "{err}");
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "[data]\npath = d.csv\nthis line has no equals sign\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn nyquist_violation_rejected_at_load() {
        let text = "[data]\npath = d.csv\nheader_type = dcp\nsampling_frequency = 20\n\
                    [treatment]\ntime_window = 2\ncut = 20\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("Nyquist"), "{err}");
    }

    #[test]
    fn bandpass_requires_ordered_pair() {
        let err =
            parse_config(&minimal("filter = bandpass\ncut = 8, 3\n")).unwrap_err();
        assert!(err.to_string().contains("low < high"), "{err}");
        let ok = parse_config(&minimal("filter = bandpass\ncut = 3, 8\n")).unwrap();
        assert_eq!(ok.cut, vec![3.0, 8.0]);
    }

    #[test]
    fn test_size_band_warns_but_loads() {
        let cfg = parse_config(&minimal("[preprocessing]\ntest_size = 0.4\n")).unwrap();
        let warnings = cfg.structural_warnings();
        assert!(warnings.iter().any(|w| w.contains("test_size")));
        let err = parse_config(&minimal("[preprocessing]\ntest_size = 1.2\n")).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
    }

    #[test]
    fn k_fold_range_enforced() {
        assert!(parse_config(&minimal("[preprocessing]\nk_fold = 2\n")).is_err());
        assert!(parse_config(&minimal("[preprocessing]\nk_fold = 11\n")).is_err());
        assert!(parse_config(&minimal("[preprocessing]\nk_fold = 10\n")).is_ok());
    }

    #[test]
    fn recursive_selection_needs_target_count() {
        let err = parse_config(&minimal("[preprocessing]\nselection_method = recursive\n"))
            .unwrap_err();
        assert!(err.to_string().contains("n_features_to_select"), "{err}");
        let ok = parse_config(&minimal(
            "[preprocessing]\nselection_method = recursive\nn_features_to_select = 5\n",
        ))
        .unwrap();
        assert_eq!(ok.n_features_to_select, Some(5));
    }

    #[test]
    fn roundtrip_is_idempotent() {
        let text = minimal(
            "overlap = 0.5\nfilter = bandstop\ncut = 3, 8\n\
             [preprocessing]\nsplit_method = inter\ntest_subjects = s1, s2\n\
             data_balancing_method = smote\n\
             [training]\nuse_ml = DT, kNN\nuse_dl = CNN\nseed = 7\n",
        );
        let cfg = parse_config(&text).unwrap();
        let reloaded = parse_config(&cfg.to_ini_string()).unwrap();
        assert_eq!(cfg, reloaded);
        // model list normalized to canonical order
        assert_eq!(reloaded.use_ml, vec![MlModel::Knn, MlModel::Dt]);
    }

    #[test]
    fn every_enum_value_roundtrips() {
        let mut cfg = PipelineConfig::defaults("d.csv", HeaderType::Tdcp);
        cfg.time_window = Some(1.0);
        cfg.sampling_frequency = Some(50);
        for &ht in HeaderType::ALL {
            cfg.header_type = ht;
            for &gb in GroupBy::ALL {
                cfg.group_by = gb;
                let reloaded = parse_config(&cfg.to_ini_string()).unwrap();
                assert_eq!(cfg, reloaded);
            }
        }
        for &dt in DataTreatment::ALL {
            cfg.data_treatment = dt;
            for &fd in FeaturesDomain::ALL {
                cfg.features_domain = fd;
                let reloaded = parse_config(&cfg.to_ini_string()).unwrap();
                assert_eq!(cfg, reloaded);
            }
        }
        for &nm in NormalizationMethod::ALL {
            cfg.normalization_method = nm;
            for &bm in BalancingMethod::ALL {
                cfg.data_balancing_method = bm;
                let reloaded = parse_config(&cfg.to_ini_string()).unwrap();
                assert_eq!(cfg, reloaded);
            }
        }
        for &sm in SubMethod::ALL {
            cfg.sub_method = sm;
            for &fk in FilterKind::ALL {
                cfg.filter = fk;
                cfg.cut = match fk {
                    FilterKind::Bandpass | FilterKind::Bandstop => vec![3.0, 8.0],
                    _ => vec![10.0],
                };
                let reloaded = parse_config(&cfg.to_ini_string()).unwrap();
                assert_eq!(cfg, reloaded);
            }
        }
        for &sel in SelectionMethod::ALL {
            cfg.selection_method = sel;
            cfg.n_features_to_select = Some(3);
            for &split in SplitMethod::ALL {
                cfg.split_method = split;
                let reloaded = parse_config(&cfg.to_ini_string()).unwrap();
                assert_eq!(cfg, reloaded);
            }
        }
    }

    #[test]
    fn validate_requires_subject_column_for_inter() {
        let text = "[data]\npath = d.csv\nheader_type = dc\nsampling_frequency = 200\n\
                    [treatment]\ntime_window = 1\n[preprocessing]\nsplit_method = inter\n";
        let cfg = parse_config(text).unwrap();
        let meta = DatasetMeta {
            n_rows: 100,
            n_channels: 3,
            has_subjects: false,
            has_sessions: false,
            sampling_frequency: 200,
            inferred_frequency: None,
            class_ids: vec!["A".into(), "B".into()],
            subject_ids: vec!["0".into()],
            session_ids: vec![],
        };
        let err = cfg.validate(&meta).unwrap_err();
        assert!(err.to_string().contains("subject column required"), "{err}");
    }

    #[test]
    fn validate_checks_nyquist_against_resolved_frequency() {
        // config omits sampling_frequency; dataset resolves it to 20 Hz
        let text = "[data]\npath = d.csv\nheader_type = tdcp\n\
                    [treatment]\ntime_window = 2\ncut = 20\n\
                    [preprocessing]\nfeatures_selection = false\n";
        let cfg = parse_config(text).unwrap();
        let mut meta = DatasetMeta {
            n_rows: 100,
            n_channels: 3,
            has_subjects: true,
            has_sessions: false,
            sampling_frequency: 20,
            inferred_frequency: Some(20),
            class_ids: vec!["A".into(), "B".into()],
            subject_ids: vec!["1".into(), "2".into()],
            session_ids: vec![],
        };
        let err = cfg.validate(&meta).unwrap_err();
        assert!(err.to_string().contains("Nyquist"), "{err}");
        meta.sampling_frequency = 200;
        meta.inferred_frequency = Some(200);
        assert!(cfg.validate(&meta).is_ok());
    }
}
