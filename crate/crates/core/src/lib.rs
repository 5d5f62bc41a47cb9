//! Codecs, repository tooling, a relying party and capacity models for an
//! RPKI variant with EE-free objects, merged manifests and proto3 files.

pub mod crypto;
pub mod der;
pub mod proto;
pub mod resources;
pub mod object;
pub mod rrdp;
pub mod repository;
pub mod rp;
pub mod capacity;
