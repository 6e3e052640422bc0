//! Expert review of candidate triples: candidate records, an append-only
//! verdict log and the REST service on top.

mod api;
mod store;

pub use api::{router, serve, SharedStore, REVIEWER_HEADER};
pub use store::{
    CandidateFilter, CandidateRecord, Policy, ReportView, SessionInputs, Status, Store, StoreError, Verdict,
};
