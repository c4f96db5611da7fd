use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::data::TaskKind;
use crate::layers::OperatorOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Arma,
    Gcn,
    Cheb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    None,
    GlobalAverageThenDense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmaOptions {
    pub stacks: usize,
    pub depth: usize,
    pub skip_dropout: f64,
    pub bias: bool,
}

impl Default for ArmaOptions {
    fn default() -> Self {
        Self {
            stacks: 2,
            depth: 1,
            skip_dropout: 0.0,
            bias: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GcnOptions {
    pub bias: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChebOptions {
    /// Number of Chebyshev terms.
    pub order: usize,
    pub bias: bool,
}

impl Default for ChebOptions {
    fn default() -> Self {
        Self {
            order: 3,
            bias: false,
        }
    }
}

/// Architecture and optimization settings, serialized as the run config.
///
/// Node tasks stack one graph layer per `hidden` width and a final graph
/// layer producing class logits. Graph-level tasks stack the hidden layers,
/// average node embeddings per graph and apply a dense output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub task: TaskKind,
    pub layer: LayerKind,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Derived from the task when absent.
    pub readout: Option<Readout>,
    pub arma: ArmaOptions,
    pub gcn: GcnOptions,
    pub cheb: ChebOptions,
    pub operators: OperatorOptions,
    /// Dropout on the input of every graph layer.
    pub dropout: f64,
    pub l2_weight: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::NodeClassification,
            layer: LayerKind::Arma,
            hidden: vec![16],
            activation: Activation::Relu,
            readout: None,
            arma: ArmaOptions::default(),
            gcn: GcnOptions::default(),
            cheb: ChebOptions::default(),
            operators: OperatorOptions::default(),
            dropout: 0.0,
            l2_weight: 0.0,
            learning_rate: 1e-2,
            max_epochs: 200,
            patience: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn resolved_readout(&self) -> Readout {
        self.readout.unwrap_or(if self.task.is_node_level() {
            Readout::None
        } else {
            Readout::GlobalAverageThenDense
        })
    }

    pub fn validate(&self) -> Result<(), String> {
        let readout = self.resolved_readout();
        if self.task.is_node_level() != (readout == Readout::None) {
            return Err(format!(
                "readout {readout:?} does not fit task {:?}",
                self.task
            ));
        }
        if self.hidden.contains(&0) {
            return Err("hidden widths must be positive".into());
        }
        if self.arma.stacks == 0 || self.arma.depth == 0 {
            return Err("ARMA needs stacks ≥ 1 and depth ≥ 1".into());
        }
        if self.cheb.order == 0 {
            return Err("Chebyshev order must be at least 1".into());
        }
        for (name, rate) in [
            ("dropout", self.dropout),
            ("arma.skip_dropout", self.arma.skip_dropout),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(format!("{name} must lie in [0, 1), got {rate}"));
            }
        }
        if !(self.operators.gamma >= 0.0) || !(self.operators.lambda_max > 0.0) {
            return Err("operators need gamma ≥ 0 and lambda_max > 0".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err("learning_rate must be finite and non-negative".into());
        }
        if !(self.l2_weight >= 0.0) || !self.l2_weight.is_finite() {
            return Err("l2_weight must be finite and non-negative".into());
        }
        if self.max_epochs == 0 || self.patience == 0 || self.patience > self.max_epochs {
            return Err("need 1 ≤ patience ≤ max_epochs".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        Ok(())
    }
}
