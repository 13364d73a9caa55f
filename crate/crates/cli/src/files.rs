//! Directory layouts shared by the commands.

use std::path::{Path, PathBuf};

use flowcast::labeling::{read_labeled_csv, LabeledDay};
use flowcast::sensor_data::{ingest_csv, SensorRecord, MINUTES_PER_DAY};

use crate::error::{invalid, Result};

pub const MASK_SUFFIX: &str = ".mask.csv";
/// Separates day and sensor id in labeled file names.
pub const LABEL_SEPARATOR: &str = "__";

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

fn is_mask(path: &Path) -> bool {
    path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(MASK_SUFFIX))
}

/// Records of one CSV file, or of every non-mask CSV in a directory.
pub fn read_records_at(path: &Path) -> Result<Vec<SensorRecord>> {
    if path.is_file() {
        return Ok(ingest_csv(path)?);
    }
    if !path.is_dir() {
        return Err(invalid(format!("{} does not exist", path.display())));
    }
    let mut out = Vec::new();
    for file in csv_files(path)?.into_iter().filter(|p| !is_mask(p)) {
        out.extend(ingest_csv(&file).map_err(|e| invalid(format!("{}: {e}", file.display())))?);
    }
    if out.is_empty() {
        return Err(invalid(format!("no sensor records under {}", path.display())));
    }
    Ok(out)
}

pub fn mask_path(dir: &Path, day: &str) -> PathBuf {
    dir.join(format!("{day}{MASK_SUFFIX}"))
}

pub fn write_mask(path: &Path, mask: &[bool]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["minute", "congested"])?;
    for (t, m) in mask.iter().enumerate() {
        w.write_record([t.to_string(), u8::from(*m).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<Vec<bool>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let mut mask = Vec::with_capacity(MINUTES_PER_DAY);
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let bad = || invalid(format!("{}: malformed row {}", path.display(), i + 2));
        let minute: usize = row.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        if minute != i {
            return Err(bad());
        }
        mask.push(match row.get(1).map(str::trim) {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(bad()),
        });
    }
    if mask.len() != MINUTES_PER_DAY {
        return Err(invalid(format!("{}: {} minutes, expected {MINUTES_PER_DAY}", path.display(), mask.len())));
    }
    Ok(mask)
}

pub fn label_file_name(day: &str, sensor: &str) -> String {
    format!("{day}{LABEL_SEPARATOR}{sensor}.csv")
}

/// Every labeled day in `dir`, ordered by file name.
pub fn read_labeled_dir(dir: &Path) -> Result<Vec<LabeledDay>> {
    if !dir.is_dir() {
        return Err(invalid(format!("{} is not a directory", dir.display())));
    }
    let mut days = Vec::new();
    for file in csv_files(dir)? {
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some((day, sensor)) = stem.split_once(LABEL_SEPARATOR) else {
            return Err(invalid(format!("{}: name is not <day>{LABEL_SEPARATOR}<sensor>.csv", file.display())));
        };
        let reader = std::fs::File::open(&file)?;
        days.push(read_labeled_csv(reader, day, sensor).map_err(|e| invalid(format!("{}: {e}", file.display())))?);
    }
    if days.is_empty() {
        return Err(invalid(format!("no labeled days under {}", dir.display())));
    }
    Ok(days)
}

/// `path` with `suffix` inserted before its extension.
pub fn sibling(path: &Path, suffix: &str, extension: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}.{extension}"))
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}
