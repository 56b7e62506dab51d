use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A kernel or graph operation received tensors with incompatible shapes.
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// A kernel produced a NaN or infinite value.
    NonFinite { op: &'static str },
    /// Invalid architecture or run configuration.
    InvalidConfig(String),
    /// A label index is outside `[0, classes)`.
    LabelOutOfRange { label: usize, classes: usize },
    /// A channel reference does not point at a prune-eligible channel.
    IneligibleChannel { layer: usize, channel: usize },
    /// A prune step would remove every channel of a layer.
    LayerAnnihilation { layer: usize },
    /// Requested more victims than the score table can yield.
    PruneSetTooLarge { requested: usize, available: usize },
    /// A relevance pass was started with a trace that does not match the model.
    TraceMismatch { layer: usize },
    /// A class has no samples, so its row cannot be normalized.
    EmptyClass { class: usize },
    /// No sample of any class was seen / all class accuracies are zero.
    EmptyScoringSet,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, expected, got } => {
                write!(f, "{op}: shape mismatch, expected {expected:?}, got {got:?}")
            }
            Error::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::IneligibleChannel { layer, channel } => {
                write!(f, "channel {channel} of layer {layer} is not prune-eligible")
            }
            Error::LayerAnnihilation { layer } => {
                write!(f, "prune step would remove every channel of layer {layer}")
            }
            Error::PruneSetTooLarge { requested, available } => {
                write!(f, "requested {requested} victims but only {available} are removable")
            }
            Error::TraceMismatch { layer } => {
                write!(f, "activation trace does not match model at layer {layer} (model mutated?)")
            }
            Error::EmptyClass { class } => {
                write!(f, "class {class} has no samples; drop the class or re-sample")
            }
            Error::EmptyScoringSet => write!(f, "scoring set is empty"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
