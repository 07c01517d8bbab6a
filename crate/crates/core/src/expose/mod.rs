//! Sensitivity testing: perturbations, templates, behavioral suites,
//! security fuzzing and group fairness.

pub mod fairness;
pub mod fuzz;
pub mod perturb;
pub mod suite;
pub mod template;

pub use fairness::{fairness, fairness_classification, fairness_regression, FairnessReport, LossKind};
pub use fuzz::{security_fuzz, FuzzResult, Verdict, FUZZ_CORPUS_VERSION};
pub use perturb::{perturb_surface, perturb_typo, PerturbKind, Perturber};
pub use suite::{run_dir, run_inv, run_mft, run_suite, Direction, SuiteSpec, TestKind, TestResult};
pub use template::{expand_template, Provider, Template};
