//! Body snapshots as schema-versioned JSON.
//!
//! A snapshot holds the grid descriptor and the nodal support values, and,
//! for mid-run snapshots, the flow state needed to resume or re-record it.
//! Floats are written in shortest round-trip form, so load(save(b)) is
//! bit-identical to `b`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use caflow::flow::{Direction, FlowParams, FlowState};
use caflow::{Body, GridDescriptor, SphereGrid};
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "caflow-body";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateHeader {
    pub t: f64,
    pub step: usize,
    pub p: f64,
    pub direction: Direction,
    pub initial_min_support: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    grid: GridDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<StateHeader>,
    support: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: field '{field}': {message}")]
    Invalid {
        path: String,
        field: &'static str,
        message: String,
    },
}

/// A loaded snapshot.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub body: Body,
    pub state: Option<StateHeader>,
}

impl Snapshot {
    /// The flow state the snapshot was taken from.
    pub fn flow_state(&self) -> Result<FlowState, caflow::Error> {
        let h = self
            .state
            .ok_or_else(|| caflow::Error::InvalidParameter("snapshot carries no flow state".into()))?;
        let params = FlowParams::new(h.p, self.body.dim(), h.direction)?;
        FlowState::resume(self.body.clone(), params, h.t, h.step, h.initial_min_support)
    }
}

fn render(body: &Body, state: Option<StateHeader>) -> String {
    let doc = Document {
        format: FORMAT.to_string(),
        version: VERSION,
        grid: body.grid().descriptor(),
        state,
        support: body.support().values().to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("snapshot documents always serialise")
}

pub fn body_to_string(body: &Body) -> String {
    render(body, None)
}

pub fn state_to_string(state: &FlowState) -> String {
    let params = state.params();
    render(
        state.body(),
        Some(StateHeader {
            t: state.t(),
            step: state.steps(),
            p: params.p,
            direction: params.direction,
            initial_min_support: state.initial_min_support(),
        }),
    )
}

/// Parse a snapshot; `origin` names the source in error messages.
pub fn parse(text: &str, origin: &str) -> Result<Snapshot, SnapshotError> {
    let doc: Document = serde_json::from_str(text).map_err(|e| SnapshotError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let invalid = |field: &'static str, message: String| SnapshotError::Invalid {
        path: origin.to_string(),
        field,
        message,
    };
    if doc.format != FORMAT {
        return Err(invalid(
            "format",
            format!("expected '{FORMAT}', found '{}'", doc.format),
        ));
    }
    if doc.version != VERSION {
        return Err(invalid(
            "version",
            format!("unsupported version {} (this build reads {VERSION})", doc.version),
        ));
    }
    let grid = SphereGrid::from_descriptor(doc.grid).map_err(|e| invalid("grid", e.to_string()))?;
    let body = Body::from_exact(Arc::new(grid), doc.support).map_err(|e| invalid("support", e.to_string()))?;
    Ok(Snapshot { body, state: doc.state })
}

fn write(path: &Path, text: &str) -> Result<(), SnapshotError> {
    fs::write(path, text).map_err(|source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_body(path: &Path, body: &Body) -> Result<(), SnapshotError> {
    write(path, &body_to_string(body))
}

pub fn save_state(path: &Path, state: &FlowState) -> Result<(), SnapshotError> {
    write(path, &state_to_string(state))
}

pub fn load(path: &Path) -> Result<Snapshot, SnapshotError> {
    let text = fs::read_to_string(path).map_err(|source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text, &path.display().to_string())
}

pub fn load_body(path: &Path) -> Result<Body, SnapshotError> {
    Ok(load(path)?.body)
}
