//! Library side of the `wbkmeans` command: input parsing, job resolution and
//! artifact writing.

pub mod execute;
pub mod ingest;
pub mod job;
pub mod verify;
