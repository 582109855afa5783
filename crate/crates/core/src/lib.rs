//! Joint optimization of multicast precoding, RIS phase shifts and RIS
//! orientation for max-min fair group rates.

pub mod ao;
pub mod channel;
pub mod config;
pub mod conic;
pub mod error;
pub mod harness;
pub mod orientation;
pub mod rate;
pub mod scene;
pub mod surrogate;

pub use ao::{run_ao, AoConfig, AoTrace, DeltaMethod};
pub use channel::{generate_channels, ChannelRealization};
pub use error::{Error, Result};
pub use rate::{objective, user_rate, Solution};
pub use scene::{generate_scene, Scene, SceneConfig};
