//! Command application with an append-only, replayable journal.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::ops::{self, Operation};
use crate::project_io::import_plan_image;

/// A command as posted by a client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub op: String,
    #[serde(default)]
    pub params: Value,
    pub user: String,
}

impl Command {
    pub fn new(op: &str, params: Value, user: &str) -> Self {
        Self { op: op.to_owned(), params, user: user.to_owned() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    /// UTC, RFC 3339 with second precision.
    pub timestamp: String,
    pub user: String,
    pub op: String,
    pub params: Value,
    pub affected_ids: Vec<String>,
    /// Digest of the dataset after the command, checked on replay.
    pub state_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub seq: u64,
    pub result: Value,
    pub affected_ids: Vec<String>,
}

/// Checks the envelope and returns the typed operation.
pub fn parse_command(cmd: &Command) -> Result<Operation> {
    if cmd.user.trim().is_empty() {
        return Err(Error::ValidationError("`user` must not be empty".into()));
    }
    Operation::parse(&cmd.op, &cmd.params)
}

/// Ids created, modified or deleted between two states. Layers whose
/// config or schema changed and new plan overlays are included by name.
pub fn affected_ids(before: &Dataset, after: &Dataset) -> Vec<String> {
    fn diff<V: PartialEq>(
        a: &std::collections::BTreeMap<String, V>,
        b: &std::collections::BTreeMap<String, V>,
        out: &mut BTreeSet<String>,
    ) {
        for (k, v) in a {
            if b.get(k) != Some(v) {
                out.insert(k.clone());
            }
        }
        out.extend(b.keys().filter(|k| !a.contains_key(*k)).cloned());
    }
    let mut out = BTreeSet::new();
    diff(&before.nodes, &after.nodes, &mut out);
    diff(&before.pipelines, &after.pipelines, &mut out);
    diff(&before.elements, &after.elements, &mut out);
    diff(&before.groups, &after.groups, &mut out);
    diff(&before.schemas, &after.schemas, &mut out);
    for c in &after.layer_configs {
        if before.layer_config(&c.layer) != Some(c) {
            out.insert(c.layer.clone());
        }
    }
    for o in &after.plan_overlays {
        if !before.plan_overlays.contains(o) {
            out.insert(o.id.clone());
        }
    }
    out.into_iter().collect()
}

fn now_utc() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Serialized command applier over one dataset.
#[derive(Debug, Clone)]
pub struct Editor {
    dataset: Dataset,
    journal: Vec<JournalEntry>,
    plans_dir: Option<PathBuf>,
}

impl Editor {
    pub fn new(dataset: Dataset, journal: Vec<JournalEntry>) -> Self {
        Self { dataset, journal, plans_dir: None }
    }

    /// Enables plan-image import: `add_plan_overlay` may then name a
    /// filesystem path, which is copied into `dir`.
    pub fn with_plans_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.plans_dir = Some(dir.into());
        self
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn plans_dir(&self) -> Option<&Path> {
        self.plans_dir.as_deref()
    }

    pub fn into_parts(self) -> (Dataset, Vec<JournalEntry>) {
        (self.dataset, self.journal)
    }

    pub fn next_seq(&self) -> u64 {
        self.journal.last().map_or(1, |e| e.seq + 1)
    }

    /// Resolves a plan image reference to a bare name in the plans dir.
    fn stage_plan_image(&self, op: &mut Operation) -> Result<()> {
        let Operation::AddPlanOverlay(p) = op else { return Ok(()) };
        let is_bare = !p.image_file.contains(['/', '\\']);
        match &self.plans_dir {
            Some(dir) if is_bare => {
                let path = dir.join(&p.image_file);
                if !path.is_file() {
                    return Err(Error::io(path, std::io::ErrorKind::NotFound.into()));
                }
            }
            Some(dir) => p.image_file = import_plan_image(dir, Path::new(&p.image_file))?,
            None => {}
        }
        Ok(())
    }

    /// Applies one command atomically: on error neither the dataset nor
    /// the journal changes.
    pub fn dispatch(&mut self, cmd: &Command) -> Result<CommandOutcome> {
        let mut op = parse_command(cmd)?;
        if let Operation::AddPlanOverlay(p) = &op {
            // validate the fit before touching the filesystem
            crate::geomath::solve_affine(&p.pairs)?;
        }
        self.stage_plan_image(&mut op)?;
        let mut next = self.dataset.clone();
        let result = ops::apply(&mut next, &op)?;
        let affected = affected_ids(&self.dataset, &next);
        let entry = JournalEntry {
            seq: self.next_seq(),
            timestamp: now_utc(),
            user: cmd.user.clone(),
            op: op.name().to_owned(),
            params: op.params(),
            affected_ids: affected.clone(),
            state_digest: next.digest(),
        };
        self.dataset = next;
        let seq = entry.seq;
        self.journal.push(entry);
        Ok(CommandOutcome { seq, result, affected_ids: affected })
    }

    /// Re-applies a recorded entry and checks it reproduces the record.
    pub fn replay_entry(&mut self, entry: &JournalEntry) -> Result<()> {
        let diverged = |reason: String| Error::ReplayDivergence { seq: entry.seq, reason };
        if entry.seq != self.next_seq() {
            return Err(diverged(format!("expected seq {}", self.next_seq())));
        }
        let op = Operation::parse(&entry.op, &entry.params).map_err(|e| diverged(e.to_string()))?;
        let mut next = self.dataset.clone();
        ops::apply(&mut next, &op).map_err(|e| diverged(format!("{}: {e}", e.kind())))?;
        let affected = affected_ids(&self.dataset, &next);
        if affected != entry.affected_ids {
            return Err(diverged(format!("affected ids {affected:?} differ from recorded {:?}", entry.affected_ids)));
        }
        if next.digest() != entry.state_digest {
            return Err(diverged("resulting state differs from the recorded digest".into()));
        }
        self.dataset = next;
        self.journal.push(entry.clone());
        Ok(())
    }
}

/// Replays `entries` over an initial project state.
pub fn replay_journal(initial: Dataset, prior: Vec<JournalEntry>, entries: &[JournalEntry]) -> Result<Editor> {
    let mut editor = Editor::new(initial, prior);
    for entry in entries {
        editor.replay_entry(entry)?;
    }
    Ok(editor)
}
