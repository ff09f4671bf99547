//! FER2013-style CSV ingestion: header `emotion,pixels,Usage`, one 48×48
//! grayscale face per row as 2304 space-separated bytes.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ImageSource, LabeledDataset, SampleRecord, SplitTag};
use crate::error::{Error, Result};

pub const FER_SIDE: usize = 48;
pub const FER_CLASSES: [&str; 7] = [
    "anger",
    "disgust",
    "fear",
    "happiness",
    "sadness",
    "surprise",
    "neutral",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Usage {
    Training,
    PublicTest,
    PrivateTest,
}

impl Usage {
    fn as_str(self) -> &'static str {
        match self {
            Usage::Training => "Training",
            Usage::PublicTest => "PublicTest",
            Usage::PrivateTest => "PrivateTest",
        }
    }

    pub fn parse(s: &str) -> Option<Usage> {
        match s {
            "Training" => Some(Usage::Training),
            "PublicTest" => Some(Usage::PublicTest),
            "PrivateTest" => Some(Usage::PrivateTest),
            _ => None,
        }
    }

    fn split_tag(self) -> SplitTag {
        match self {
            Usage::Training => SplitTag::Train,
            Usage::PublicTest => SplitTag::Val,
            Usage::PrivateTest => SplitTag::Test,
        }
    }
}

pub fn load_fer2013_csv(path: &Path, split: Usage) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };

    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(parse_err(1, "empty file".into())),
    };
    if header.trim() != "emotion,pixels,Usage" {
        return Err(parse_err(
            1,
            format!("expected header `emotion,pixels,Usage`, got `{}`", header.trim()),
        ));
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1; // 1-based, header is row 1
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, ',');
        let (emotion, pixels, usage) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), Some(c)) => (a.trim(), b.trim(), c.trim()),
            _ => return Err(parse_err(row, "expected 3 comma-separated fields".into())),
        };
        let usage = Usage::parse(usage)
            .ok_or_else(|| parse_err(row, format!("unknown Usage `{usage}`")))?;
        if usage != split {
            continue;
        }
        let label: usize = emotion
            .parse()
            .map_err(|_| parse_err(row, format!("bad emotion label `{emotion}`")))?;
        if label >= FER_CLASSES.len() {
            return Err(parse_err(
                row,
                format!("emotion label {label} out of range [0, 7)"),
            ));
        }
        let mut bytes = Vec::with_capacity(FER_SIDE * FER_SIDE);
        for tok in pixels.split_ascii_whitespace() {
            let v: u16 = tok
                .parse()
                .map_err(|_| parse_err(row, format!("bad pixel value `{tok}`")))?;
            if v > 255 {
                return Err(parse_err(row, format!("pixel value {v} exceeds 255")));
            }
            bytes.push(v as u8);
        }
        if bytes.len() != FER_SIDE * FER_SIDE {
            return Err(parse_err(
                row,
                format!(
                    "expected {} pixel values, found {}",
                    FER_SIDE * FER_SIDE,
                    bytes.len()
                ),
            ));
        }
        samples.push(SampleRecord {
            source: ImageSource::GrayBytes {
                side: FER_SIDE,
                bytes,
            },
            class_id: label,
            subject_id: None,
        });
    }

    if samples.is_empty() {
        return Err(Error::Dataset(format!(
            "no rows with Usage={} in {}",
            split.as_str(),
            path.display()
        )));
    }
    Ok(LabeledDataset {
        samples,
        class_names: FER_CLASSES.iter().map(|s| s.to_string()).collect(),
        split_tag: split.split_tag(),
    })
}
