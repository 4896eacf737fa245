use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::AdamConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Hash,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    /// Seed of the hash provider.
    pub seed: u64,
    pub path: Option<String>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Hash,
            seed: 0,
            path: None,
        }
    }
}

/// Everything a training run depends on.
///
/// The file form is flat `key = value` lines with `#` comments; see
/// [`TrainConfig::set`] for the keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub model: ModelConfig,
    pub optimizer: AdamConfig,
    pub clip_norm: f64,
    /// Weight of the auxiliary mention-detection loss; 0 trains on the
    /// antecedent likelihood alone.
    pub mention_loss_coef: f64,
    /// Stop once the dev Avg-F1 reaches this value.
    pub early_stop_f1: Option<f64>,
    /// Start with the refinement gate saturated open.
    pub gate_init_open: bool,
    pub embeddings: EmbeddingConfig,
    /// Count mentions that match no gold mention in link-change analysis.
    pub include_nongold: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            epochs: 24,
            model: ModelConfig::default(),
            optimizer: AdamConfig::default(),
            clip_norm: 1.0,
            mention_loss_coef: 1.0,
            early_stop_f1: None,
            gate_init_open: false,
            embeddings: EmbeddingConfig::default(),
            include_nongold: true,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "epochs",
    "dropout",
    "lr.task",
    "lr.encoder",
    "weight_decay.task",
    "weight_decay.encoder",
    "adam.beta1",
    "adam.beta2",
    "adam.eps",
    "clip_norm",
    "mention_loss_coef",
    "early_stop_f1",
    "feature_dim",
    "hidden",
    "max_span_width",
    "prune_ratio",
    "max_spans",
    "max_antecedents",
    "max_segment_len",
    "hoi.method",
    "hoi.rounds",
    "hoi.gate_init_open",
    "cm.order",
    "cm.reduce",
    "ee.max_spans",
    "embed.provider",
    "embed.dim",
    "embed.seed",
    "embed.path",
    "analysis.include_nongold",
];

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply(text)?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let o = &mut self.optimizer;
        match key {
            "seed" => self.seed = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "dropout" => m.dropout = num(key, value)?,
            "lr.task" => o.task.lr = num(key, value)?,
            "lr.encoder" => o.encoder.lr = num(key, value)?,
            "weight_decay.task" => o.task.weight_decay = num(key, value)?,
            "weight_decay.encoder" => o.encoder.weight_decay = num(key, value)?,
            "adam.beta1" => o.beta1 = num(key, value)?,
            "adam.beta2" => o.beta2 = num(key, value)?,
            "adam.eps" => o.eps = num(key, value)?,
            "clip_norm" => self.clip_norm = num(key, value)?,
            "mention_loss_coef" => self.mention_loss_coef = num(key, value)?,
            "early_stop_f1" => {
                self.early_stop_f1 = match value {
                    "" | "none" | "off" => None,
                    v => Some(num(key, v)?),
                }
            }
            "feature_dim" => m.feature_dim = num(key, value)?,
            "hidden" => {
                m.hidden = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| num(key, s))
                    .collect::<Result<_>>()?
            }
            "max_span_width" => m.max_span_width = num(key, value)?,
            "prune_ratio" => m.prune_ratio = num(key, value)?,
            "max_spans" => m.max_spans = num(key, value)?,
            "max_antecedents" => m.max_antecedents = num(key, value)?,
            "max_segment_len" => m.max_segment_len = num(key, value)?,
            "hoi.method" => m.hoi.method = value.parse()?,
            "hoi.rounds" => m.hoi.rounds = num(key, value)?,
            "hoi.gate_init_open" => self.gate_init_open = flag(key, value)?,
            "cm.order" => m.hoi.cm_order = value.parse()?,
            "cm.reduce" => m.hoi.cm_reduce = value.parse()?,
            "ee.max_spans" => m.hoi.ee_max_spans = num(key, value)?,
            "embed.provider" => {
                self.embeddings.provider = match value {
                    "hash" => ProviderKind::Hash,
                    "file" => ProviderKind::File,
                    _ => return Err(Error::Config(format!("embed.provider: expected hash or file, got {value:?}"))),
                }
            }
            "embed.dim" => m.emb_dim = num(key, value)?,
            "embed.seed" => self.embeddings.seed = num(key, value)?,
            "embed.path" => self.embeddings.path = Some(value.to_string()),
            "analysis.include_nongold" => self.include_nongold = flag(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let o = &self.optimizer;
        if !(o.task.lr > 0.0 && o.encoder.lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if !(self.mention_loss_coef >= 0.0 && self.mention_loss_coef.is_finite()) {
            return Err(Error::Config("mention_loss_coef must be a finite non-negative number".into()));
        }
        if self.embeddings.provider == ProviderKind::File && self.embeddings.path.is_none() {
            return Err(Error::Config("embed.provider = file needs embed.path".into()));
        }
        Ok(())
    }

    /// The flat form, one `key = value` per line, that [`parse`](Self::parse) reads back.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let o = &self.optimizer;
        let hidden: Vec<String> = m.hidden.iter().map(usize::to_string).collect();
        let provider = match self.embeddings.provider {
            ProviderKind::Hash => "hash",
            ProviderKind::File => "file",
        };
        let order = match m.hoi.cm_order {
            crate::hoi::CmOrder::Sequential => "sequential",
            crate::hoi::CmOrder::EasyFirst => "easy_first",
        };
        let reduce = match m.hoi.cm_reduce {
            crate::hoi::CmReduce::Mean => "mean",
            crate::hoi::CmReduce::Max => "max",
        };
        let mut lines = vec![
            format!("seed = {}", self.seed),
            format!("epochs = {}", self.epochs),
            format!("dropout = {:?}", m.dropout),
            format!("lr.task = {:?}", o.task.lr),
            format!("lr.encoder = {:?}", o.encoder.lr),
            format!("weight_decay.task = {:?}", o.task.weight_decay),
            format!("weight_decay.encoder = {:?}", o.encoder.weight_decay),
            format!("adam.beta1 = {:?}", o.beta1),
            format!("adam.beta2 = {:?}", o.beta2),
            format!("adam.eps = {:?}", o.eps),
            format!("clip_norm = {:?}", self.clip_norm),
            format!("mention_loss_coef = {:?}", self.mention_loss_coef),
            format!("early_stop_f1 = {}", self.early_stop_f1.map_or("none".to_string(), |v| format!("{v:?}"))),
            format!("feature_dim = {}", m.feature_dim),
            format!("hidden = {}", hidden.join(",")),
            format!("max_span_width = {}", m.max_span_width),
            format!("prune_ratio = {:?}", m.prune_ratio),
            format!("max_spans = {}", m.max_spans),
            format!("max_antecedents = {}", m.max_antecedents),
            format!("max_segment_len = {}", m.max_segment_len),
            format!("hoi.method = {}", m.hoi.method),
            format!("hoi.rounds = {}", m.hoi.rounds),
            format!("hoi.gate_init_open = {}", self.gate_init_open),
            format!("cm.order = {order}"),
            format!("cm.reduce = {reduce}"),
            format!("ee.max_spans = {}", m.hoi.ee_max_spans),
            format!("embed.provider = {provider}"),
            format!("embed.dim = {}", m.emb_dim),
            format!("embed.seed = {}", self.embeddings.seed),
        ];
        if let Some(p) = &self.embeddings.path {
            lines.push(format!("embed.path = {p}"));
        }
        lines.push(format!("analysis.include_nongold = {}", self.include_nongold));
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hoi::{CmOrder, HoiMethod};

    #[test]
    fn defaults_follow_the_training_recipe() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 24);
        assert_eq!(c.model.dropout, 0.3);
        assert_eq!(c.model.hidden, vec![1000, 1000]);
        assert_eq!(c.optimizer.task.lr, 3e-4);
        assert_eq!(c.model.max_antecedents, 50);
        assert_eq!(c.model.hoi.ee_max_spans, 300);
    }

    #[test]
    fn parses_flat_keys() {
        let c = TrainConfig::parse("# toy\nepochs = 3\nhidden = 16, 8\nhoi.method = cm\ncm.order = easy_first # comment\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.model.hidden, vec![16, 8]);
        assert_eq!(c.model.hoi.method, HoiMethod::Cm);
        assert_eq!(c.model.hoi.cm_order, CmOrder::EasyFirst);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(TrainConfig::parse("nope = 1").is_err());
        assert!(TrainConfig::parse("epochs").is_err());
        assert!(TrainConfig::parse("epochs = many").is_err());
        assert!(TrainConfig::parse("hoi.method = xx").is_err());
    }

    #[test]
    fn text_form_round_trips() {
        let mut c = TrainConfig::default();
        c.set("hoi.method", "ee").unwrap();
        c.set("embed.path", "/tmp/e.bin").unwrap();
        c.set("early_stop_f1", "0.95").unwrap();
        c.set("lr.task", "0.001").unwrap();
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
        for key in KEYS {
            assert!(c.to_text().contains(&format!("{key} = ")), "{key}");
        }
    }
}
