use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isp::DegradationProfile;

/// Piecewise-constant learning rate: `initial` before `drop_epoch`, `final_` from it on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub final_: f64,
    pub drop_epoch: usize,
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        if epoch < self.drop_epoch {
            self.initial
        } else {
            self.final_
        }
    }
}

fn check_lr(initial: f64, final_: f64) -> Result<()> {
    if !(initial > 0.0 && final_ > 0.0 && final_ <= initial) {
        return Err(Error::Config(format!(
            "learning rates must satisfy 0 < lr_final <= lr_initial (got {final_} and {initial})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub lambda_weight: f64,
    pub beta_weight: f64,
    pub beta_star: f64,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub lr_drop_epoch: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub profile: String,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            lambda_weight: 1.0,
            beta_weight: 0.01,
            beta_star: 1.0,
            lr_initial: 1e-4,
            lr_final: 1e-6,
            lr_drop_epoch: 200,
            max_epochs: 300,
            batch_size: 16,
            seed: 0,
            profile: "default".into(),
        }
    }
}

impl Stage1Config {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            initial: self.lr_initial,
            final_: self.lr_final,
            drop_epoch: self.lr_drop_epoch,
        }
    }

    pub fn profile(&self) -> Result<DegradationProfile> {
        self.profile.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if [self.lambda_weight, self.beta_weight, self.beta_star].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2 for shuffled pairing".into()));
        }
        check_lr(self.lr_initial, self.lr_final)?;
        self.profile().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Restoration,
    Classification,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restoration" => Ok(Task::Restoration),
            "classification" => Ok(Task::Classification),
            other => Err(Error::Config(format!("unknown task `{other}` (expected restoration or classification)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Restoration => "restoration",
            Task::Classification => "classification",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    pub task: Task,
    pub gamma1: f64,
    pub gamma2: f64,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub lr_drop_epoch: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub profile: String,
    /// Also train the pilot-free alignment network (ablation middle row).
    pub train_no_pilot: bool,
    /// Supervised epochs on clean images before alignment (classification only).
    pub task_pretrain_epochs: usize,
    pub task_lr: f64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self::restoration()
    }
}

impl Stage2Config {
    pub fn restoration() -> Self {
        Self {
            task: Task::Restoration,
            gamma1: 0.0,
            gamma2: 1.0,
            lr_initial: 1e-3,
            lr_final: 1e-6,
            lr_drop_epoch: 300,
            max_epochs: 400,
            batch_size: 16,
            seed: 0,
            profile: "default".into(),
            train_no_pilot: false,
            task_pretrain_epochs: 0,
            task_lr: 1e-3,
        }
    }

    pub fn classification() -> Self {
        Self {
            task: Task::Classification,
            gamma1: 2.0,
            gamma2: 1.0,
            profile: "dark".into(),
            task_pretrain_epochs: 40,
            ..Self::restoration()
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            initial: self.lr_initial,
            final_: self.lr_final,
            drop_epoch: self.lr_drop_epoch,
        }
    }

    pub fn profile(&self) -> Result<DegradationProfile> {
        self.profile.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0) {
            return Err(Error::Config("gamma weights must be non-negative".into()));
        }
        if self.task == Task::Restoration && self.gamma1 != 0.0 {
            return Err(Error::Config("restoration has no task loss; gamma1 must be 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        check_lr(self.lr_initial, self.lr_final)?;
        check_lr(self.task_lr, self.task_lr)?;
        self.profile().map(|_| ())
    }
}
