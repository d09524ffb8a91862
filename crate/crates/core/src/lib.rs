//! Step-level permission model for CI workflows: endpoint inference,
//! per-action policies, request verification and workflow analysis.

pub mod analyzer;
pub mod endpoint;
pub mod error;
pub mod permission;
pub mod policy;
pub mod verifier;
pub mod workflow;

pub use endpoint::{EndpointMap, InferredPermission, RequestDescriptor, UnknownKind};
pub use error::{EndpointMapError, PermissionError, PolicyError, WorkflowError};
pub use permission::{AccessLevel, PermissionScope, PermissionSet, Severity};
pub use policy::{KnowledgeBase, LoadOptions, Provenance, StepPolicy};
pub use workflow::{ActionRef, EffectivePermissions, Job, Step, StepKind, Workflow};
pub use verifier::{Decision, Mode, Reason, Verdict, Verifier, VerifyOptions, VerifyRequest, VerifyResponse};
pub use analyzer::{analyze_corpus, analyze_job, attack_surface, diff_policies, severity_report, CorpusReport, JobAnalysis};
