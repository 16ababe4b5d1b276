//! Small deterministic writers: pretty JSON, JSON lines, raw text.

use std::fs;
use std::path::Path;

use serde::Serialize;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable artifact");
    text.push('\n');
    fs::write(path, text)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("serializable artifact"));
        text.push('\n');
    }
    fs::write(path, text)
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    fs::write(path, text)
}
