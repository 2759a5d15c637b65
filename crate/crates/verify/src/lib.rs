//! Holds the acceptance suite only; see `tests/acceptance.rs`.
