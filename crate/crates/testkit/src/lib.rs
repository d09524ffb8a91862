//! Shared fixtures for the stepguard test suites: a recording fake API
//! server, a linear-scan endpoint oracle, random request generators and an
//! independent recount of corpus classifications.

pub mod corpus;
pub mod fake_api;
pub mod generate;
pub mod oracle;

pub use fake_api::{FakeApi, Hit};
