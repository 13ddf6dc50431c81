//! Training hyperparameters and their `key=value` file format.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_steps: usize,
    /// ALM pretraining steps run before fine-tuning.
    pub pretrain_steps: usize,
    /// Validation runs without improvement before stopping.
    pub patience: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub margin: f64,
    pub paper_literal_jcs: bool,
    pub max_name_len: usize,
    pub folds: usize,
    pub toy: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_steps: 10_000,
            pretrain_steps: 1_000,
            patience: 5,
            eval_every: 500,
            seed: 0,
            lambda1: 1.0,
            lambda2: 1.0,
            margin: 0.5,
            paper_literal_jcs: false,
            max_name_len: 8,
            folds: 5,
            toy: false,
        }
    }
}

impl TrainConfig {
    /// Small model settings; the full-size learning rate is far too small
    /// to move a toy model in a few hundred steps.
    pub fn toy() -> Self {
        TrainConfig { batch_size: 16, lr: 1e-2, max_steps: 200, pretrain_steps: 30, eval_every: 50, toy: true, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.patience == 0 || self.eval_every == 0 {
            return Err(Error::invalid("lr must be > 0 and batch_size, patience, eval_every >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::invalid("Adam betas must lie in [0, 1) and eps > 0"));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || !(self.margin > 0.0) {
            return Err(Error::invalid("lambdas must be >= 0 and margin > 0"));
        }
        if self.folds == 0 || self.max_name_len == 0 {
            return Err(Error::invalid("folds and max_name_len must be >= 1"));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::invalid(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "batch_size" => self.batch_size = p(key, value)?,
            "lr" => self.lr = p(key, value)?,
            "beta1" => self.beta1 = p(key, value)?,
            "beta2" => self.beta2 = p(key, value)?,
            "adam_eps" => self.adam_eps = p(key, value)?,
            "max_steps" => self.max_steps = p(key, value)?,
            "pretrain_steps" => self.pretrain_steps = p(key, value)?,
            "patience" => self.patience = p(key, value)?,
            "eval_every" => self.eval_every = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "lambda1" => self.lambda1 = p(key, value)?,
            "lambda2" => self.lambda2 = p(key, value)?,
            "margin" => self.margin = p(key, value)?,
            "paper_literal_jcs" => self.paper_literal_jcs = p(key, value)?,
            "max_name_len" => self.max_name_len = p(key, value)?,
            "folds" => self.folds = p(key, value)?,
            "toy" => self.toy = p(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// `toy=true` anywhere in the file switches the base to [`TrainConfig::toy`];
    /// the other keys then override it.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.into(),
                line: i + 1,
                field: "line".into(),
                message: format!("expected key=value, found `{line}`"),
            })?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let toy = pairs.iter().any(|(_, k, v)| k == "toy" && v == "true");
        let mut cfg = if toy { TrainConfig::toy() } else { TrainConfig::default() };
        for (line, k, v) in pairs {
            cfg.set(&k, &v).map_err(|e| Error::Parse { path: origin.into(), line, field: k.clone(), message: e.to_string() })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_kv(&self) -> String {
        format!(
            "toy={}\nbatch_size={}\nlr={:?}\nbeta1={:?}\nbeta2={:?}\nadam_eps={:?}\nmax_steps={}\npretrain_steps={}\npatience={}\neval_every={}\nseed={}\nlambda1={:?}\nlambda2={:?}\nmargin={:?}\npaper_literal_jcs={}\nmax_name_len={}\nfolds={}\n",
            self.toy,
            self.batch_size,
            self.lr,
            self.beta1,
            self.beta2,
            self.adam_eps,
            self.max_steps,
            self.pretrain_steps,
            self.patience,
            self.eval_every,
            self.seed,
            self.lambda1,
            self.lambda2,
            self.margin,
            self.paper_literal_jcs,
            self.max_name_len,
            self.folds,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_errors() {
        let mut c = TrainConfig::toy();
        c.seed = 7;
        c.lr = 1.5e-3;
        let back = TrainConfig::parse(&c.to_kv(), Path::new("c")).unwrap();
        assert_eq!(back, c);
        let d = TrainConfig::parse("# defaults\nseed = 3\n", Path::new("c")).unwrap();
        assert_eq!(d.lr, 5e-5);
        assert_eq!(d.batch_size, 32);
        assert_eq!(d.seed, 3);
        assert!(TrainConfig::parse("learning_rate=1", Path::new("c")).is_err());
        assert!(TrainConfig::parse("lr=0", Path::new("c")).is_err());
        assert!(TrainConfig::parse("lr", Path::new("c")).is_err());
        assert!(TrainConfig::toy().lr > TrainConfig::default().lr);
    }
}
