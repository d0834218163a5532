//! Line-delimited split files and the classes file.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use scriptorium_core::{ClassSpace, Dataset, Document};

use crate::error::{Error, Result};

pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassesFile {
    pub names: Vec<String>,
    #[serde(default)]
    pub positive_class: Option<String>,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

pub fn load_classes(path: &Path) -> Result<ClassSpace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ClassesFile = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
    let positive = match &file.positive_class {
        Some(name) => Some(
            file.names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::format(path, format!("unknown label {name:?}")))?,
        ),
        None => None,
    };
    Ok(ClassSpace::new(file.names, positive, file.prior)?)
}

pub fn classes_file(classes: &ClassSpace) -> ClassesFile {
    ClassesFile {
        names: classes.names().to_vec(),
        positive_class: classes.positive_class().and_then(|c| classes.name(c)).map(str::to_string),
        prior: classes.prior().map(<[f64]>::to_vec),
    }
}

/// Reads one split file. Errors carry the 1-based line number.
pub fn load_split(path: &Path, classes: &ClassSpace) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fail = |message: String| Error::Record { path: path.to_path_buf(), line: line_no, message };
        let record: Record = serde_json::from_str(line).map_err(|e| fail(format!("malformed record: {e}")))?;
        if record.id.is_empty() {
            return Err(fail("empty id".into()));
        }
        if !seen.insert(record.id.clone()) {
            return Err(fail(format!("duplicate id {:?}", record.id)));
        }
        let gold = match &record.label {
            Some(name) => Some(classes.index_of(name).map_err(|e| fail(e.to_string()))?),
            None => None,
        };
        docs.push(Document::new(record.id, record.text, gold));
    }
    if docs.is_empty() {
        return Err(Error::format(path, "empty split file"));
    }
    Ok(docs)
}

/// Loads every canonical split present in `dir`; at least one must exist.
pub fn load_dataset(dir: &Path, classes_path: &Path) -> Result<Dataset> {
    let classes = load_classes(classes_path)?;
    let mut dataset = Dataset::new(classes);
    for split in SPLITS {
        let path = dir.join(format!("{split}.jsonl"));
        if path.exists() {
            let docs = load_split(&path, &dataset.classes)?;
            dataset.insert_split(split, docs)?;
        }
    }
    if dataset.split_names().next().is_none() {
        return Err(Error::format(dir, "no train/valid/test .jsonl files"));
    }
    Ok(dataset)
}

/// `load_dataset(dir, dir/classes.json)`.
pub fn load_data_dir(dir: &Path) -> Result<Dataset> {
    load_dataset(dir, &dir.join("classes.json"))
}

pub fn write_split(path: &Path, docs: &[Document], classes: &ClassSpace) -> Result<()> {
    let mut out = Vec::new();
    for doc in docs {
        let record = Record {
            id: doc.id.clone(),
            text: doc.text.clone(),
            label: doc.gold.and_then(|g| classes.name(g)).map(str::to_string),
        };
        serde_json::to_writer(&mut out, &record).expect("records serialize");
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let classes_path = dir.join("classes.json");
    let mut f = fs::File::create(&classes_path).map_err(|e| Error::io(&classes_path, e))?;
    let json = serde_json::to_string(&classes_file(&dataset.classes)).expect("classes serialize");
    writeln!(f, "{json}").map_err(|e| Error::io(&classes_path, e))?;
    for split in dataset.split_names() {
        let docs = dataset.split(split)?;
        write_split(&dir.join(format!("{split}.jsonl")), docs, &dataset.classes)?;
    }
    Ok(())
}
