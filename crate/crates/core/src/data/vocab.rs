use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Instance, RawRecord};
use crate::{Error, Result};

/// Token stored in the reserved unknown slot.
pub const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VocabOptions {
    pub user_field: usize,
    pub item_field: usize,
    /// Append a slot at id `Z_n − 1` of every field for unseen tokens.
    pub reserve_unknown: bool,
}

impl Default for VocabOptions {
    fn default() -> Self {
        Self {
            user_field: 0,
            item_field: 1,
            reserve_unknown: false,
        }
    }
}

/// Per-field token ↔ id maps. Ids within a field are dense in `[0, Z_n)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldVocabulary {
    ids: Vec<HashMap<String, u32>>,
    tokens: Vec<Vec<String>>,
    options: VocabOptions,
}

impl FieldVocabulary {
    fn empty(field_count: usize, options: VocabOptions) -> Self {
        Self {
            ids: vec![HashMap::new(); field_count],
            tokens: vec![Vec::new(); field_count],
            options,
        }
    }

    fn insert(&mut self, field: usize, token: &str) -> u32 {
        if let Some(&id) = self.ids[field].get(token) {
            return id;
        }
        let id = self.tokens[field].len() as u32;
        self.ids[field].insert(token.to_string(), id);
        self.tokens[field].push(token.to_string());
        id
    }

    fn validate_options(field_count: usize, options: &VocabOptions) -> Result<()> {
        if field_count < 2 {
            return Err(Error::Dataset(format!("need at least 2 fields, found {field_count}")));
        }
        for (role, idx) in [("user", options.user_field), ("item", options.item_field)] {
            if idx >= field_count {
                return Err(Error::Dataset(format!(
                    "{role} field index {idx} out of range for {field_count} fields"
                )));
            }
        }
        if options.user_field == options.item_field {
            return Err(Error::Dataset("user and item fields must differ".into()));
        }
        Ok(())
    }

    pub fn field_count(&self) -> usize {
        self.tokens.len()
    }

    /// Z_n.
    pub fn cardinality(&self, field: usize) -> usize {
        self.tokens[field].len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.tokens.iter().map(Vec::len).collect()
    }

    pub fn options(&self) -> VocabOptions {
        self.options
    }

    pub fn user_field(&self) -> usize {
        self.options.user_field
    }

    pub fn item_field(&self) -> usize {
        self.options.item_field
    }

    pub fn id(&self, field: usize, token: &str) -> Option<u32> {
        self.ids.get(field)?.get(token).copied()
    }

    pub fn token(&self, field: usize, id: u32) -> Option<&str> {
        self.tokens.get(field)?.get(id as usize).map(String::as_str)
    }

    /// Id of the reserved unknown slot of `field`, if the vocabulary has one.
    pub fn unknown_id(&self, field: usize) -> Option<u32> {
        self.options
            .reserve_unknown
            .then(|| self.cardinality(field) as u32 - 1)
    }

    /// Item ids that are real catalog entries (the unknown slot excluded).
    pub fn item_catalog_size(&self) -> usize {
        let z = self.cardinality(self.item_field());
        if self.options.reserve_unknown {
            z - 1
        } else {
            z
        }
    }

    pub fn encode_record(&self, record: &RawRecord) -> Result<Instance> {
        if record.tokens.len() != self.field_count() {
            return Err(Error::Format {
                line: record.line,
                message: format!(
                    "expected {} fields, found {}",
                    self.field_count(),
                    record.tokens.len()
                ),
            });
        }
        let field_ids = record
            .tokens
            .iter()
            .enumerate()
            .map(|(field, token)| {
                self.id(field, token)
                    .or_else(|| self.unknown_id(field))
                    .ok_or_else(|| Error::UnknownToken {
                        field,
                        token: token.clone(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Instance::new(record.label, field_ids))
    }

    /// Writes `field_index<TAB>token<TAB>id` lines sorted by (field, id).
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for (field, tokens) in self.tokens.iter().enumerate() {
            for (id, token) in tokens.iter().enumerate() {
                writeln!(w, "{field}\t{token}\t{id}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_tsv(path: impl AsRef<Path>, options: VocabOptions) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, options)
    }

    pub fn parse_tsv(text: &str, options: VocabOptions) -> Result<Self> {
        let mut entries: Vec<Vec<String>> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Format { line: line_no, message };
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(bad(format!("expected 3 columns, found {}", parts.len())));
            }
            let field: usize = parts[0].parse().map_err(|_| bad(format!("bad field index {:?}", parts[0])))?;
            let id: usize = parts[2].parse().map_err(|_| bad(format!("bad id {:?}", parts[2])))?;
            if field > entries.len() {
                return Err(bad(format!("field {field} out of order")));
            }
            if field == entries.len() {
                entries.push(Vec::new());
            }
            if field + 1 != entries.len() || id != entries[field].len() {
                return Err(bad(format!("entry ({field}, {id}) out of order")));
            }
            entries[field].push(parts[1].to_string());
        }
        Self::validate_options(entries.len(), &options)?;
        let mut vocab = Self::empty(entries.len(), options);
        for (field, tokens) in entries.iter().enumerate() {
            for token in tokens {
                vocab.insert(field, token);
            }
            if vocab.cardinality(field) != tokens.len() {
                return Err(Error::Dataset(format!("duplicate token in field {field}")));
            }
            if options.reserve_unknown && tokens.last().map(String::as_str) != Some(UNKNOWN_TOKEN) {
                return Err(Error::Dataset(format!("field {field} lacks the reserved unknown slot")));
            }
        }
        Ok(vocab)
    }
}

/// Assigns ids in first-occurrence order per field.
pub fn build_vocabulary(records: &[RawRecord], options: VocabOptions) -> Result<FieldVocabulary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Dataset("cannot build a vocabulary from zero records".into()))?;
    let n = first.field_count();
    FieldVocabulary::validate_options(n, &options)?;
    let mut vocab = FieldVocabulary::empty(n, options);
    for record in records {
        if record.field_count() != n {
            return Err(Error::Format {
                line: record.line,
                message: format!("expected {n} fields, found {}", record.field_count()),
            });
        }
        for (field, token) in record.tokens.iter().enumerate() {
            vocab.insert(field, token);
        }
    }
    if options.reserve_unknown {
        for field in 0..n {
            vocab.tokens[field].push(UNKNOWN_TOKEN.to_string());
            let id = vocab.tokens[field].len() as u32 - 1;
            vocab.ids[field].entry(UNKNOWN_TOKEN.to_string()).or_insert(id);
        }
    }
    Ok(vocab)
}
