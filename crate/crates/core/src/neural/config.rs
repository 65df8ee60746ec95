use std::fmt::Write as _;
use std::path::PathBuf;

use super::NeuralError;

#[derive(Debug, Clone, PartialEq)]
pub struct CharCnnConfig {
    pub widths: Vec<usize>,
    pub filters_per_width: usize,
    pub char_embedding_dim: usize,
}

impl Default for CharCnnConfig {
    fn default() -> Self {
        CharCnnConfig {
            widths: vec![1, 2, 3],
            filters_per_width: 100,
            char_embedding_dim: 75,
        }
    }
}

impl CharCnnConfig {
    pub fn output_dim(&self) -> usize {
        self.filters_per_width * self.widths.len()
    }
}

/// Source embedding channel. Active channels are concatenated in the order
/// word, file, char-cnn, then tags in configuration order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Channel {
    Word,
    File,
    CharCnn,
    Tag(String),
}

impl Channel {
    pub fn parse(s: &str) -> Option<Channel> {
        Some(match s {
            "word" => Channel::Word,
            "file" => Channel::File,
            "char-cnn" => Channel::CharCnn,
            _ => Channel::Tag(s.strip_prefix("tag:")?.to_string()),
        })
    }

    pub fn name(&self) -> String {
        match self {
            Channel::Word => "word".into(),
            Channel::File => "file".into(),
            Channel::CharCnn => "char-cnn".into(),
            Channel::Tag(t) => format!("tag:{t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    /// Token encoder only.
    One,
    /// Token encoder plus a character encoder over the whole sentence.
    Two,
}

impl EncoderMode {
    pub fn count(self) -> usize {
        match self {
            EncoderMode::One => 1,
            EncoderMode::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub target_embedding_dim: usize,
    pub encoder_layers: usize,
    pub beam_size: usize,
    pub max_decode_steps: usize,
    pub scheduled_sampling_prob: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub embedding_max_norm: f64,
    pub label_smoothing: f64,
    pub encoders: EncoderMode,
    pub channels: Vec<Channel>,
    pub word_dim: usize,
    pub tag_dim: usize,
    pub char_cnn: CharCnnConfig,
    /// Text file of frozen word vectors for the `file` channel.
    pub embedding_file: Option<PathBuf>,
    pub min_target_occ: usize,
    pub min_source_occ: usize,
    /// Training pairs longer than these are skipped.
    pub max_source_tokens: usize,
    pub max_target_tokens: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    /// Epochs without dev improvement before a phase stops early.
    pub patience: usize,
    pub eval_every: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_size: 300,
            target_embedding_dim: 300,
            encoder_layers: 1,
            beam_size: 10,
            max_decode_steps: 1000,
            scheduled_sampling_prob: 0.2,
            batch_size: 48,
            learning_rate: 0.001,
            grad_clip: 0.9,
            embedding_max_norm: 3.0,
            label_smoothing: 0.0,
            encoders: EncoderMode::One,
            channels: vec![Channel::Word, Channel::CharCnn],
            word_dim: 300,
            tag_dim: 200,
            char_cnn: CharCnnConfig::default(),
            embedding_file: None,
            min_target_occ: 3,
            min_source_occ: 1,
            max_source_tokens: 125,
            max_target_tokens: 1160,
            pretrain_epochs: 10,
            finetune_epochs: 5,
            patience: 2,
            eval_every: 1,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

fn bad(key: &str, reason: impl Into<String>) -> NeuralError {
    NeuralError::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, NeuralError> {
    v.parse().map_err(|_| bad(key, format!("cannot parse {v:?}")))
}

fn list(key: &str, v: &str) -> Result<Vec<usize>, NeuralError> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("target_embedding_dim", self.target_embedding_dim),
            ("encoder_layers", self.encoder_layers),
            ("beam_size", self.beam_size),
            ("max_decode_steps", self.max_decode_steps),
            ("batch_size", self.batch_size),
            ("word_dim", self.word_dim),
            ("tag_dim", self.tag_dim),
            ("char_cnn_filters", self.char_cnn.filters_per_width),
            ("char_embedding_dim", self.char_cnn.char_embedding_dim),
            ("min_target_occ", self.min_target_occ),
            ("min_source_occ", self.min_source_occ),
            ("eval_every", self.eval_every),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(bad(k, "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.scheduled_sampling_prob) {
            return Err(bad("scheduled_sampling_prob", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(bad("label_smoothing", "must lie in [0, 1)"));
        }
        if self.char_cnn.widths.is_empty() || self.char_cnn.widths.contains(&0) {
            return Err(bad("char_cnn_widths", "widths must be positive and non-empty"));
        }
        if self.channels.is_empty() {
            return Err(bad("channels", "at least one source channel is required"));
        }
        for (k, v) in [
            ("learning_rate", self.learning_rate),
            ("grad_clip", self.grad_clip),
            ("embedding_max_norm", self.embedding_max_norm),
            ("init_scale", self.init_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(k, "must be a positive number"));
            }
        }
        Ok(())
    }

    /// Channels sorted into the fixed concatenation order, tags keeping
    /// their configured order.
    pub fn ordered_channels(&self) -> Vec<Channel> {
        let mut fixed: Vec<Channel> = [Channel::Word, Channel::File, Channel::CharCnn]
            .into_iter()
            .filter(|c| self.channels.contains(c))
            .collect();
        fixed.extend(self.channels.iter().filter(|c| matches!(c, Channel::Tag(_))).cloned());
        fixed
    }

    pub fn tag_channels(&self) -> Vec<String> {
        self.ordered_channels()
            .into_iter()
            .filter_map(|c| match c {
                Channel::Tag(t) => Some(t),
                _ => None,
            })
            .collect()
    }

    pub fn has(&self, c: &Channel) -> bool {
        self.channels.contains(c)
    }

    /// `key = value` lines; blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<ModelConfig, NeuralError> {
        let mut cfg = ModelConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(&format!("line {}", i + 1), "expected key = value"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), NeuralError> {
        match key {
            "hidden_size" => self.hidden_size = num(key, v)?,
            "target_embedding_dim" => self.target_embedding_dim = num(key, v)?,
            "encoder_layers" => self.encoder_layers = num(key, v)?,
            "beam_size" => self.beam_size = num(key, v)?,
            "max_decode_steps" => self.max_decode_steps = num(key, v)?,
            "scheduled_sampling_prob" => self.scheduled_sampling_prob = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "grad_clip" => self.grad_clip = num(key, v)?,
            "embedding_max_norm" => self.embedding_max_norm = num(key, v)?,
            "label_smoothing" => self.label_smoothing = num(key, v)?,
            "encoders" => {
                self.encoders = match v {
                    "one" => EncoderMode::One,
                    "two" => EncoderMode::Two,
                    _ => return Err(bad(key, "expected one or two")),
                }
            }
            "channels" => {
                self.channels = v
                    .split(',')
                    .map(|c| Channel::parse(c.trim()).ok_or_else(|| bad(key, format!("unknown channel {c:?}"))))
                    .collect::<Result<_, _>>()?
            }
            "word_dim" => self.word_dim = num(key, v)?,
            "tag_dim" => self.tag_dim = num(key, v)?,
            "char_cnn_widths" => self.char_cnn.widths = list(key, v)?,
            "char_cnn_filters" => self.char_cnn.filters_per_width = num(key, v)?,
            "char_embedding_dim" => self.char_cnn.char_embedding_dim = num(key, v)?,
            "embedding_file" => self.embedding_file = if v.is_empty() { None } else { Some(v.into()) },
            "min_target_occ" => self.min_target_occ = num(key, v)?,
            "min_source_occ" => self.min_source_occ = num(key, v)?,
            "max_source_tokens" => self.max_source_tokens = num(key, v)?,
            "max_target_tokens" => self.max_target_tokens = num(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = num(key, v)?,
            "finetune_epochs" => self.finetune_epochs = num(key, v)?,
            "patience" => self.patience = num(key, v)?,
            "eval_every" => self.eval_every = num(key, v)?,
            "init_scale" => self.init_scale = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        put("hidden_size", self.hidden_size.to_string());
        put("target_embedding_dim", self.target_embedding_dim.to_string());
        put("encoder_layers", self.encoder_layers.to_string());
        put("beam_size", self.beam_size.to_string());
        put("max_decode_steps", self.max_decode_steps.to_string());
        put("scheduled_sampling_prob", self.scheduled_sampling_prob.to_string());
        put("batch_size", self.batch_size.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("grad_clip", self.grad_clip.to_string());
        put("embedding_max_norm", self.embedding_max_norm.to_string());
        put("label_smoothing", self.label_smoothing.to_string());
        put(
            "encoders",
            match self.encoders {
                EncoderMode::One => "one",
                EncoderMode::Two => "two",
            }
            .into(),
        );
        put(
            "channels",
            self.channels.iter().map(Channel::name).collect::<Vec<_>>().join(","),
        );
        put("word_dim", self.word_dim.to_string());
        put("tag_dim", self.tag_dim.to_string());
        put("char_cnn_widths", join(&self.char_cnn.widths));
        put("char_cnn_filters", self.char_cnn.filters_per_width.to_string());
        put("char_embedding_dim", self.char_cnn.char_embedding_dim.to_string());
        put(
            "embedding_file",
            self.embedding_file
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        put("min_target_occ", self.min_target_occ.to_string());
        put("min_source_occ", self.min_source_occ.to_string());
        put("max_source_tokens", self.max_source_tokens.to_string());
        put("max_target_tokens", self.max_target_tokens.to_string());
        put("pretrain_epochs", self.pretrain_epochs.to_string());
        put("finetune_epochs", self.finetune_epochs.to_string());
        put("patience", self.patience.to_string());
        put("eval_every", self.eval_every.to_string());
        put("init_scale", self.init_scale.to_string());
        put("seed", self.seed.to_string());
        s
    }
}
