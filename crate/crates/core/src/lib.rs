//! Trust-or-reject decisions for classifier predictions from soft outputs.
//!
//! The library is generic over the floating-point type; the aliases at the
//! crate root fix it to `f64`.

pub mod error;
pub mod gaussian;
pub mod harness;
pub mod metrics;
pub mod perturb;
pub mod scalar;
pub mod scorefile;
pub mod scoring;
pub mod trainer;

pub use error::{Error, Result};
pub use gaussian::{Label, LabeledSample};
pub use harness::{ReportFormat, RocSelection};
pub use metrics::{ConfusionCounts, RocMode};
pub use scalar::Scalar;
pub use scoring::Method;

pub type Softmax = scoring::SoftmaxVector<f64>;
pub type Logits = scoring::LogitVector<f64>;
pub type Score = scoring::RejectionScore<f64>;
pub type Mahalanobis = scoring::MahalanobisModel<f64>;
pub type GaussianModel = gaussian::GaussianBinaryModel<f64>;
pub type Sample = gaussian::LabeledSample<f64>;
pub type Split = gaussian::SplitDataset<f64>;
pub type Classifier = trainer::LogisticClassifier<f64>;
pub type TrainConfig = trainer::TrainConfig<f64>;
pub type ScoredItem = metrics::RejectionScoredItem<f64>;
pub type Roc = metrics::RocCurve<f64>;
pub type ExperimentConfig = harness::ExperimentConfig<f64>;
pub type ExperimentReport = harness::ExperimentReport<f64>;
pub type ScoreRecord = scorefile::ScoreFileRecord<f64>;
