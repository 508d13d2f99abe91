use crate::density::{ClassId, Violation};
use crate::models::SensorId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty Gaussian mixture")]
    EmptyMixture,

    #[error("covariance is not positive definite")]
    SingularCovariance,

    #[error("singular measurement geometry: target coincides with sensor {0}")]
    SingularGeometry(SensorId),

    #[error("measurement {z} of sensor {sensor} lies outside its clutter region")]
    ZeroClutterIntensity { sensor: SensorId, z: f64 },

    #[error("measurements reference unregistered sensor {0}")]
    UnknownSensor(SensorId),

    #[error("class {0} is not in the class library")]
    UnknownClass(ClassId),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid density: {0}")]
    InvalidDensity(#[from] Violation),

    #[error("malformed density message: {0}")]
    Decode(String),
}
