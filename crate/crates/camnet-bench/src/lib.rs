pub use camnet_core as core;
