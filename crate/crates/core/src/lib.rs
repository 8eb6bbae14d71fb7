pub mod arch;
pub mod inject;
pub mod harness;
pub mod ltl;
pub mod mape;
pub mod monitor;
pub mod templates;
