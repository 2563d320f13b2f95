use std::fs;
use std::path::{Path, PathBuf};

use super::{collect_new, Connector, EventCursor, FetchOutcome, SourceDescriptor, Watermark};
use crate::domain::{PlatformSet, Timestamp};

/// Reads `<root>/<source-id>/*.jsonl`, files in name order, one event per
/// line.
#[derive(Debug, Clone)]
pub struct FixtureConnector {
    root: PathBuf,
    platforms: PlatformSet,
}

impl FixtureConnector {
    pub fn new(root: impl Into<PathBuf>, platforms: PlatformSet) -> Self {
        Self {
            root: root.into(),
            platforms,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn read_lines(&self, dir: &Path) -> std::io::Result<Vec<String>> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl") && p.is_file())
            .collect();
        files.sort();
        let mut lines = Vec::new();
        for f in files {
            lines.extend(fs::read_to_string(&f)?.lines().map(str::to_string));
        }
        Ok(lines)
    }
}

impl Connector for FixtureConnector {
    fn fetch(
        &self,
        source: &SourceDescriptor,
        watermark: Option<&Watermark>,
        now: Timestamp,
    ) -> FetchOutcome {
        if !self.root.is_dir() {
            return FetchOutcome::PermanentFailure(format!(
                "fixture root {} does not exist",
                self.root.display()
            ));
        }
        let dir = self.root.join(&source.source_id);
        let cursor = EventCursor::from_watermark(watermark);
        let lines = if dir.is_dir() {
            match self.read_lines(&dir) {
                Ok(lines) => lines,
                Err(e) => return FetchOutcome::TransientFailure(format!("{}: {e}", dir.display())),
            }
        } else {
            log::warn!("no fixture directory for source {}", source.source_id);
            Vec::new()
        };
        let (records, next) = collect_new(&source.source_id, lines, &self.platforms, &cursor, now);
        FetchOutcome::Success {
            records,
            watermark: next.to_watermark(),
        }
    }
}
