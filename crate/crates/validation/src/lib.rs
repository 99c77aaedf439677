//! Holds the full-scale acceptance target; see `tests/acceptance.rs`.
