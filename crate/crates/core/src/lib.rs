//! Traffic incident detection, flow prediction and macroscopic simulation
//! from loop-detector data.

pub mod fundamental_diagram;
pub mod godunov;
pub mod labeling;
pub mod neural;
pub mod pipeline;
pub mod sensor_data;
pub mod signal;
