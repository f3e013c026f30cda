//! JSON service over a loaded [`memhop::Engine`], plus the request handling
//! the `memhop` command line shares with it.

pub mod ops;
pub mod service;

pub use ops::{
    CompleteRequest, CompleteResponse, ErrorKind, InjectRequest, InjectResponse, LensRequest, OpError, Service,
    ServiceConfig,
};
pub use service::{router, serve};
