//! Acceptance suite for the workbench, run with
//! `cargo test -p opss-validation --test acceptance`.
