//! Class-per-directory ingestion: each subdirectory of the root is a class
//! holding P5/P6 pixmaps. Classes are assigned ids in lexicographic order;
//! sample order is the sorted path order so datasets are stable across runs.
//! A filename prefix `subjectNN_` is parsed as a subject id.

use std::path::Path;

use super::{ImageSource, LabeledDataset, SampleRecord, SplitTag};
use crate::error::{Error, Result};
use crate::imageops::pnm;

fn parse_subject_id(file_name: &str) -> Option<u32> {
    let rest = file_name.strip_prefix("subject")?;
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() || !rest[digits.len()..].starts_with('_') {
        return None;
    }
    digits.parse().ok()
}

pub fn load_image_directory(root: &Path) -> Result<LabeledDataset> {
    let mut class_dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "{} contains no class subdirectories",
            root.display()
        )));
    }

    let mut samples = Vec::new();
    let mut class_names = Vec::new();
    for (class_id, dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Dataset(format!(
                "class directory {} is empty",
                dir.display()
            )));
        }
        class_names.push(
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        for path in files {
            // decode now to validate; keep in memory (directory datasets are
            // desk-scale)
            let img = pnm::read_file(&path)?;
            let subject_id = path
                .file_name()
                .and_then(|n| parse_subject_id(&n.to_string_lossy()));
            samples.push(SampleRecord {
                source: ImageSource::Memory(img),
                class_id,
                subject_id,
            });
        }
    }
    Ok(LabeledDataset {
        samples,
        class_names,
        split_tag: SplitTag::Train,
    })
}
