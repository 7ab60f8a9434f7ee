//! Phoneme inventory, forced-alignment parsing, and frame-level one-hot
//! encoding.
//!
//! Alignment files are UTF-8 text with one `start<TAB>end<TAB>LABEL` entry
//! per line, times in seconds. Stress digits (`AA1`) are stripped and labels
//! are matched case-insensitively. Silence labels map to the all-zero row.

use std::collections::HashMap;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Stress-free ARPAbet, the CMU dictionary phone set.
pub const ARPABET: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH",
];

/// Labels treated as non-speech.
pub const SILENCE_LABELS: [&str; 6] = ["SIL", "SP", "SPN", "PAU", "H#", ""];

#[derive(Clone, Debug, PartialEq)]
pub struct PhonemeInventory {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for PhonemeInventory {
    fn default() -> Self {
        Self::arpabet()
    }
}

impl PhonemeInventory {
    pub fn arpabet() -> Self {
        Self::new(ARPABET.iter().map(|s| s.to_string()).collect()).expect("ARPAbet labels are unique")
    }

    pub fn new(labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate phoneme label {l}")));
            }
        }
        Ok(PhonemeInventory { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.index.get(&normalize_label(label)).copied()
    }
}

/// Uppercases and strips trailing stress digits.
pub fn normalize_label(label: &str) -> String {
    label
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_digit())
        .to_ascii_uppercase()
}

pub fn is_silence(label: &str) -> bool {
    let l = label.trim().to_ascii_uppercase();
    SILENCE_LABELS.contains(&l.as_str())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentEntry {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

impl AlignmentEntry {
    pub fn new(start: f64, end: f64, label: impl Into<String>) -> Self {
        AlignmentEntry {
            start,
            end,
            label: label.into(),
        }
    }
}

/// Checks `0 <= start < end` and that entries are sorted and disjoint.
pub fn validate_alignment(entries: &[AlignmentEntry]) -> Result<()> {
    let mut prev_end = 0.0;
    for (i, e) in entries.iter().enumerate() {
        if !(e.start >= 0.0 && e.start < e.end) || !e.end.is_finite() {
            return Err(Error::invalid(format!(
                "alignment entry {i} has invalid interval [{}, {})",
                e.start, e.end
            )));
        }
        if e.start < prev_end {
            return Err(Error::invalid(format!(
                "alignment entry {i} starts at {} before the previous entry ends at {prev_end}",
                e.start
            )));
        }
        prev_end = e.end;
    }
    Ok(())
}

pub fn parse_alignment(text: &str) -> Result<Vec<AlignmentEntry>> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::invalid(format!(
                "alignment line {}: expected start<TAB>end<TAB>label, got {line:?}",
                n + 1
            )));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("alignment line {}: bad time {s:?}", n + 1)))
        };
        entries.push(AlignmentEntry::new(num(fields[0])?, num(fields[1])?, fields[2].trim()));
    }
    validate_alignment(&entries)?;
    Ok(entries)
}

pub fn read_alignment(path: &Path) -> Result<Vec<AlignmentEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignment(&text).map_err(|e| Error::data(path.display().to_string(), e.to_string()))
}

pub fn format_alignment(entries: &[AlignmentEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}\t{}\t{}\n", e.start, e.end, e.label))
        .collect()
}

/// `[frames x inventory.len()]` one-hot matrix. Frame `i` takes the label of
/// the entry covering its centre time `(i + 0.5) * hop`; silence and
/// uncovered frames are all-zero.
pub fn encode_phonemes(
    alignment: &[AlignmentEntry],
    frames: usize,
    hop: f64,
    inventory: &PhonemeInventory,
) -> Result<Tensor> {
    validate_alignment(alignment)?;
    let mut classes = Vec::with_capacity(alignment.len());
    for e in alignment {
        let class = if is_silence(&e.label) {
            None
        } else {
            Some(
                inventory
                    .index(&e.label)
                    .ok_or_else(|| Error::invalid(format!("unknown phoneme label {:?}", e.label)))?,
            )
        };
        classes.push(class);
    }
    let width = inventory.len();
    let mut out = Tensor::zeros([frames, width]);
    let mut cursor = 0;
    for i in 0..frames {
        let centre = (i as f64 + 0.5) * hop;
        while cursor < alignment.len() && alignment[cursor].end <= centre {
            cursor += 1;
        }
        if cursor < alignment.len() && alignment[cursor].start <= centre {
            if let Some(c) = classes[cursor] {
                out.data_mut()[i * width + c] = 1.0;
            }
        }
    }
    Ok(out)
}
