//! Structured stderr logging: one `{ts, stage, level, msg}` object per line.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{Level, LevelFilter, Log, Metadata, Record};

use super::PipelineStage;

struct JsonLogger {
    level: LevelFilter,
}

/// Stage name for a log target; module paths map to `setu`.
fn stage_of(target: &str) -> &str {
    if PipelineStage::parse(target).is_some() {
        target
    } else {
        "setu"
    }
}

pub fn format_line(ts: u64, target: &str, level: Level, msg: &str) -> String {
    serde_json::json!({
        "ts": ts,
        "stage": stage_of(target),
        "level": level.as_str().to_ascii_lowercase(),
        "msg": msg,
    })
    .to_string()
}

impl Log for JsonLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let line = format_line(ts, record.target(), record.level(), &record.args().to_string());
        let _ = writeln!(std::io::stderr().lock(), "{line}");
    }

    fn flush(&self) {}
}

/// Installs the logger once; later calls only adjust the level.
pub fn init_logging(level: LevelFilter) {
    let _ = log::set_boxed_logger(Box::new(JsonLogger { level }));
    log::set_max_level(level);
}
