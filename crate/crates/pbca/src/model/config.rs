//! Forecaster configuration and its flat `key = value` text form.
//!
//! The same text format is used for config files on disk and for the
//! `__config__` entry embedded in checkpoints, so a saved model carries
//! everything needed to rebuild its data pipeline.

use std::fmt;

use crate::attention::MaskMode;
use crate::data::Normalization;
use crate::error::{Error, Result};

/// Model family. `A` is plain content attention; `pi1`/`pi2` add per-lag
/// scalar/columnwise position parameters; `pi3` runs one pi2-style attention
/// over concatenated per-variable states; the `multi-*` variants give each
/// variable its own encoder and attention and concatenate the contexts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    A,
    Pi1,
    Pi2,
    Pi3,
    MultiA,
    MultiPi1,
    MultiPi2,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::A,
        Variant::Pi1,
        Variant::Pi2,
        Variant::Pi3,
        Variant::MultiA,
        Variant::MultiPi1,
        Variant::MultiPi2,
    ];

    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "A" => Ok(Variant::A),
            "pi1" => Ok(Variant::Pi1),
            "pi2" => Ok(Variant::Pi2),
            "pi3" => Ok(Variant::Pi3),
            "multi-A" => Ok(Variant::MultiA),
            "multi-pi1" => Ok(Variant::MultiPi1),
            "multi-pi2" => Ok(Variant::MultiPi2),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected A|pi1|pi2|pi3|multi-A|multi-pi1|multi-pi2)"
            ))),
        }
    }

    /// Does every variable get its own attention head?
    pub fn per_variable_attention(self) -> bool {
        matches!(self, Variant::MultiA | Variant::MultiPi1 | Variant::MultiPi2)
    }

    /// Attention mechanism used by each head.
    pub fn head_variant(self) -> crate::attention::AttentionVariant {
        use crate::attention::AttentionVariant;
        match self {
            Variant::A | Variant::MultiA => AttentionVariant::A,
            Variant::Pi1 | Variant::MultiPi1 => AttentionVariant::Pi1,
            Variant::Pi2 | Variant::MultiPi2 => AttentionVariant::Pi2,
            Variant::Pi3 => AttentionVariant::Pi3,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::A => "A",
            Variant::Pi1 => "pi1",
            Variant::Pi2 => "pi2",
            Variant::Pi3 => "pi3",
            Variant::MultiA => "multi-A",
            Variant::MultiPi1 => "multi-pi1",
            Variant::MultiPi2 => "multi-pi2",
        })
    }
}

/// What the decoder consumes as the previous output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    /// True previous targets (training default).
    TeacherForced,
    /// The model's own previous predictions (validation/test).
    FreeRunning,
}

impl ForwardMode {
    pub fn parse(s: &str) -> Result<ForwardMode> {
        match s {
            "teacher-forced" => Ok(ForwardMode::TeacherForced),
            "free-running" => Ok(ForwardMode::FreeRunning),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected teacher-forced|free-running)"
            ))),
        }
    }
}

impl fmt::Display for ForwardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForwardMode::TeacherForced => "teacher-forced",
            ForwardMode::FreeRunning => "free-running",
        })
    }
}

fn mask_mode_to_str(mode: MaskMode) -> &'static str {
    match mode {
        MaskMode::Exclude => "exclude",
        MaskMode::LiteralZero => "literal-zero",
        MaskMode::Disabled => "disabled",
    }
}

fn mask_mode_parse(s: &str) -> Result<MaskMode> {
    match s {
        "exclude" => Ok(MaskMode::Exclude),
        "literal-zero" => Ok(MaskMode::LiteralZero),
        "disabled" => Ok(MaskMode::Disabled),
        other => Err(Error::Config(format!(
            "unknown mask_mode '{other}' (expected exclude|literal-zero|disabled)"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastConfig {
    /// History length fed to the encoder.
    pub t: usize,
    /// Forecast horizon produced by the decoder.
    pub t_prime: usize,
    /// LSTM hidden size.
    pub n: usize,
    /// Attention unit count.
    pub m: usize,
    /// Number of variables the model consumes.
    pub k: usize,
    /// Index (within the model's variables) of the predicted series.
    pub target_variable: usize,
    pub variant: Variant,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// How invalid lags enter the softmax (position variants only).
    pub mask_mode: MaskMode,
    /// Regularize biases and pi as well as weights.
    pub regularize_all: bool,
    /// Optional global gradient-norm clip.
    pub grad_clip: Option<f64>,
    /// Decoder feed during training.
    pub train_mode: ForwardMode,
    pub normalization: Normalization,
    /// Drop windows whose rows straddle a partition boundary.
    pub strict_windows: bool,
    /// Data columns to read from CSV; `None` means every non-timestamp column.
    pub columns: Option<Vec<String>>,
    pub missing_token: String,
    pub timestamp_column: Option<String>,
}

impl ForecastConfig {
    /// Desk-scale defaults; `n`/`m` sit at the small end of the benchmark
    /// grid ({128, 256} LSTM units, {256, 512} attention units).
    pub fn new(t: usize, t_prime: usize) -> Self {
        ForecastConfig {
            t,
            t_prime,
            n: 128,
            m: 256,
            k: 1,
            target_variable: 0,
            variant: Variant::A,
            learning_rate: 1e-3,
            l2: 1e-4,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 1,
            mask_mode: MaskMode::Exclude,
            regularize_all: false,
            grad_clip: None,
            train_mode: ForwardMode::TeacherForced,
            normalization: Normalization::ZScore,
            strict_windows: false,
            columns: None,
            missing_token: String::new(),
            timestamp_column: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.t_prime == 0 {
            return Err(Error::Config("t and t_prime must be at least 1".into()));
        }
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config("n and m must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.target_variable >= self.k {
            return Err(Error::Config(format!(
                "target_variable {} out of range for k = {}",
                self.target_variable, self.k
            )));
        }
        if !self.variant.per_variable_attention()
            && !matches!(self.variant, Variant::Pi3)
            && self.k != 1
        {
            return Err(Error::Config(format!(
                "variant {} is univariate but k = {}",
                self.variant, self.k
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.l2 < 0.0 {
            return Err(Error::Config(format!("l2 must be nonnegative, got {}", self.l2)));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip > 0.0) {
                return Err(Error::Config(format!(
                    "grad_clip must be positive, got {clip}"
                )));
            }
        }
        Ok(())
    }

    /// Attention heads: one per variable for the `multi-*` variants, a single
    /// shared head otherwise.
    pub fn attention_heads(&self) -> usize {
        if self.variant.per_variable_attention() {
            self.k
        } else {
            1
        }
    }

    /// Encoder-state dimension seen by one attention head.
    pub fn head_input_dim(&self) -> usize {
        match self.variant {
            Variant::Pi3 => 2 * self.k * self.n,
            _ => 2 * self.n,
        }
    }

    /// Dimension of the context vector entering the decoder (`2Kn` overall).
    pub fn context_dim(&self) -> usize {
        2 * self.k * self.n
    }

    /// Serialize as deterministic `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("t", self.t.to_string());
        line("t_prime", self.t_prime.to_string());
        line("n", self.n.to_string());
        line("m", self.m.to_string());
        line("k", self.k.to_string());
        line("target_variable", self.target_variable.to_string());
        line("variant", self.variant.to_string());
        line("learning_rate", self.learning_rate.to_string());
        line("l2", self.l2.to_string());
        line("batch_size", self.batch_size.to_string());
        line("max_epochs", self.max_epochs.to_string());
        line("patience", self.patience.to_string());
        line("seed", self.seed.to_string());
        line("mask_mode", mask_mode_to_str(self.mask_mode).to_string());
        line("regularize_all", self.regularize_all.to_string());
        line(
            "grad_clip",
            self.grad_clip.map_or_else(|| "none".to_string(), |c| c.to_string()),
        );
        line("train_mode", self.train_mode.to_string());
        line("normalization", self.normalization.to_string());
        line("strict_windows", self.strict_windows.to_string());
        if let Some(cols) = &self.columns {
            line("columns", cols.join(","));
        }
        line("missing_token", self.missing_token.clone());
        if let Some(ts) = &self.timestamp_column {
            line("timestamp_column", ts.clone());
        }
        out
    }

    /// Parse `key = value` lines. `t` and `t_prime` are required unless
    /// supplied by `preset`; unknown keys are an error.
    pub fn from_text(text: &str, preset: Option<(usize, usize)>) -> Result<ForecastConfig> {
        let mut t = preset.map(|p| p.0);
        let mut t_prime = preset.map(|p| p.1);
        let mut cfg = ForecastConfig::new(1, 1);

        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad_num = |what: &str| {
                Error::Config(format!("line {}: invalid {what} '{value}'", lineno + 1))
            };
            match key {
                "t" => t = Some(value.parse().map_err(|_| bad_num("t"))?),
                "t_prime" => t_prime = Some(value.parse().map_err(|_| bad_num("t_prime"))?),
                "n" => cfg.n = value.parse().map_err(|_| bad_num("n"))?,
                "m" => cfg.m = value.parse().map_err(|_| bad_num("m"))?,
                "k" => cfg.k = value.parse().map_err(|_| bad_num("k"))?,
                "target_variable" => {
                    cfg.target_variable = value.parse().map_err(|_| bad_num("target_variable"))?
                }
                "variant" => cfg.variant = Variant::parse(value)?,
                "learning_rate" => {
                    cfg.learning_rate = value.parse().map_err(|_| bad_num("learning_rate"))?
                }
                "l2" => cfg.l2 = value.parse().map_err(|_| bad_num("l2"))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad_num("batch_size"))?,
                "max_epochs" => cfg.max_epochs = value.parse().map_err(|_| bad_num("max_epochs"))?,
                "patience" => cfg.patience = value.parse().map_err(|_| bad_num("patience"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad_num("seed"))?,
                "mask_mode" => cfg.mask_mode = mask_mode_parse(value)?,
                "regularize_all" => {
                    cfg.regularize_all = value.parse().map_err(|_| bad_num("regularize_all"))?
                }
                "grad_clip" => {
                    cfg.grad_clip = if value == "none" {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad_num("grad_clip"))?)
                    }
                }
                "train_mode" => cfg.train_mode = ForwardMode::parse(value)?,
                "normalization" => cfg.normalization = Normalization::parse(value)?,
                "strict_windows" => {
                    cfg.strict_windows = value.parse().map_err(|_| bad_num("strict_windows"))?
                }
                "columns" => {
                    cfg.columns = Some(
                        value
                            .split(',')
                            .map(|c| c.trim().to_string())
                            .filter(|c| !c.is_empty())
                            .collect(),
                    )
                }
                "missing_token" => cfg.missing_token = value.to_string(),
                "timestamp_column" => cfg.timestamp_column = Some(value.to_string()),
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }

        cfg.t = t.ok_or_else(|| Error::Config("missing required key 't'".into()))?;
        cfg.t_prime =
            t_prime.ok_or_else(|| Error::Config("missing required key 't_prime'".into()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ForecastConfig::new(48, 4);
        cfg.variant = Variant::Pi2;
        cfg.n = 16;
        cfg.m = 8;
        cfg.seed = 7;
        cfg.learning_rate = 0.003;
        cfg.grad_clip = Some(5.0);
        cfg.columns = Some(vec!["a".into(), "b".into()]);
        cfg.k = 2;
        cfg.variant = Variant::MultiPi1;
        cfg.timestamp_column = Some("t".into());
        let text = cfg.to_text();
        let parsed = ForecastConfig::from_text(&text, None).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_key_is_config_error() {
        let err = ForecastConfig::from_text("t = 4\nt_prime = 2\nbogus = 1\n", None);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn missing_t_is_config_error() {
        let err = ForecastConfig::from_text("t_prime = 2\n", None);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn preset_supplies_t() {
        let cfg = ForecastConfig::from_text("n = 4\nm = 4\n", Some((96, 4))).unwrap();
        assert_eq!((cfg.t, cfg.t_prime), (96, 4));
    }

    #[test]
    fn univariate_variant_rejects_k2() {
        let err = ForecastConfig::from_text("t = 4\nt_prime = 2\nk = 2\nvariant = pi1\n", None);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn variant_order_for_tie_breaks() {
        assert!(Variant::Pi1 < Variant::Pi2);
        assert!(Variant::Pi2 < Variant::Pi3);
    }

    #[test]
    fn pi3_context_dims() {
        let mut cfg = ForecastConfig::new(8, 2);
        cfg.k = 3;
        cfg.n = 4;
        cfg.variant = Variant::Pi3;
        assert_eq!(cfg.attention_heads(), 1);
        assert_eq!(cfg.head_input_dim(), 24);
        assert_eq!(cfg.context_dim(), 24);
        cfg.variant = Variant::MultiPi2;
        assert_eq!(cfg.attention_heads(), 3);
        assert_eq!(cfg.head_input_dim(), 8);
        assert_eq!(cfg.context_dim(), 24);
    }
}
