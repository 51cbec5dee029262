use std::borrow::Cow;
use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::io::BufRead;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::entities;
use super::record::{Access, DblpRecord, EeLink, PubType};
use super::select::extract_doi;
use super::IngestError;

/// Non-fatal problem attached to one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestWarning {
    pub key: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TextEncoding {
    Utf8,
    Latin1,
}

struct RecordBuilder {
    element: String,
    attrs: Vec<(String, String)>,
    fields: Vec<(String, String, Option<String>)>,
    unknown_entities: Vec<String>,
}

struct FieldBuilder {
    name: String,
    type_attr: Option<String>,
    text: String,
}

/// Streaming reader over a corpus file. Yields one record per top-level
/// publication element, in document order. Only the record being assembled
/// is held in memory.
///
/// Warnings accumulate until [`DblpReader::drain_warnings`] is called, so
/// long-running callers should drain after each record.
pub struct DblpReader<R: BufRead> {
    xml: Reader<R>,
    buf: Vec<u8>,
    depth: usize,
    encoding: TextEncoding,
    record: Option<RecordBuilder>,
    field: Option<FieldBuilder>,
    warnings: Vec<IngestWarning>,
    done: bool,
}

/// Convenience wrapper around [`DblpReader::new`].
pub fn parse_dblp_stream<R: BufRead>(source: R) -> DblpReader<R> {
    DblpReader::new(source)
}

impl<R: BufRead> DblpReader<R> {
    pub fn new(source: R) -> Self {
        let mut xml = Reader::from_reader(source);
        xml.config_mut().check_end_names = true;
        DblpReader {
            xml,
            buf: Vec::with_capacity(8 * 1024),
            depth: 0,
            encoding: TextEncoding::Utf8,
            record: None,
            field: None,
            warnings: Vec::new(),
            done: false,
        }
    }

    pub fn drain_warnings(&mut self) -> Vec<IngestWarning> {
        std::mem::take(&mut self.warnings)
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> u64 {
        self.xml.buffer_position()
    }

    fn xml_error(&self, message: impl Into<String>) -> IngestError {
        IngestError::Xml {
            offset: self.xml.error_position().max(self.xml.buffer_position()),
            message: message.into(),
        }
    }

    fn decode<'a>(&self, bytes: &'a [u8]) -> Result<Cow<'a, str>, IngestError> {
        match self.encoding {
            TextEncoding::Latin1 => Ok(Cow::Owned(bytes.iter().map(|&b| b as char).collect())),
            TextEncoding::Utf8 => std::str::from_utf8(bytes)
                .map(Cow::Borrowed)
                .map_err(|e| self.xml_error(format!("invalid UTF-8: {e}"))),
        }
    }

    fn attributes(
        &self,
        e: &BytesStart<'_>,
        unknown: &mut Vec<String>,
    ) -> Result<Vec<(String, String)>, IngestError> {
        let mut out = Vec::new();
        for attr in e.attributes() {
            let attr = attr.map_err(|err| self.xml_error(err.to_string()))?;
            let name = self.decode(attr.key.as_ref())?.into_owned();
            let value = entities::expand(&self.decode(&attr.value)?, unknown);
            out.push((name, value));
        }
        Ok(out)
    }

    fn start_record(&mut self, e: &BytesStart<'_>) -> Result<(), IngestError> {
        let element = self.decode(e.name().as_ref())?.into_owned();
        let mut unknown = Vec::new();
        let attrs = self.attributes(e, &mut unknown)?;
        self.record = Some(RecordBuilder {
            element,
            attrs,
            fields: Vec::new(),
            unknown_entities: unknown,
        });
        Ok(())
    }

    fn start_field(&mut self, e: &BytesStart<'_>) -> Result<(), IngestError> {
        let name = self.decode(e.name().as_ref())?.into_owned();
        let mut unknown = Vec::new();
        let type_attr = self
            .attributes(e, &mut unknown)?
            .into_iter()
            .find(|(k, _)| k == "type")
            .map(|(_, v)| v);
        if let Some(rec) = self.record.as_mut() {
            rec.unknown_entities.extend(unknown);
        }
        self.field = Some(FieldBuilder {
            name,
            type_attr,
            text: String::new(),
        });
        Ok(())
    }

    fn finish_field(&mut self) {
        if let (Some(field), Some(rec)) = (self.field.take(), self.record.as_mut()) {
            rec.fields.push((field.name, field.text, field.type_attr));
        }
    }

    fn push_text(&mut self, raw: &[u8], expand: bool) -> Result<(), IngestError> {
        let text = self.decode(raw)?;
        let Some(rec) = self.record.as_mut() else {
            return Ok(());
        };
        let Some(field) = self.field.as_mut() else {
            return Ok(());
        };
        if expand {
            field.text.push_str(&entities::expand(&text, &mut rec.unknown_entities));
        } else {
            field.text.push_str(&text);
        }
        Ok(())
    }

    fn finish_record(&mut self) -> Option<DblpRecord> {
        let rec = self.record.take()?;
        let mut raw_attrs = BTreeMap::new();
        let mut key = String::new();
        for (name, value) in rec.attrs {
            if name == "key" {
                key = value;
            } else {
                raw_attrs.insert(format!("@{name}"), value);
            }
        }
        let pub_type = PubType::from_element(&rec.element).unwrap_or_else(|| {
            raw_attrs.insert("@element".to_string(), rec.element.clone());
            PubType::Other
        });
        if key.is_empty() {
            self.warnings.push(IngestWarning {
                key: String::new(),
                message: format!("<{}> element without key skipped", rec.element),
            });
            return None;
        }
        for entity in &rec.unknown_entities {
            self.warnings.push(IngestWarning {
                key: key.clone(),
                message: format!("unknown entity &{entity}; kept verbatim"),
            });
        }

        let mut record = DblpRecord::new(key, pub_type, String::new());
        let mut have_title = false;
        for (name, text, type_attr) in rec.fields {
            match name.as_str() {
                "author" => record.authors.push(text),
                "title" if !have_title => {
                    record.title = text;
                    have_title = true;
                }
                "year" if record.year.is_none() => match text.trim().parse() {
                    Ok(y) => record.year = Some(y),
                    Err(_) => insert_raw(&mut raw_attrs, name, text),
                },
                "booktitle" | "journal" if record.venue.is_none() && !text.is_empty() => {
                    record.venue = Some(text)
                }
                "ee" => {
                    let access = match type_attr.as_deref() {
                        Some("oa") => Access::Open,
                        Some(_) => Access::Closed,
                        None => Access::Unknown,
                    };
                    record.ee_links.push(EeLink::new(text.trim(), access));
                }
                _ => insert_raw(&mut raw_attrs, name, text),
            }
        }
        record.raw_attrs = raw_attrs;
        record.doi = extract_doi(&record);
        Some(record)
    }

    fn step(&mut self) -> Result<Option<DblpRecord>, IngestError> {
        loop {
            self.buf.clear();
            let event = match self.xml.read_event_into(&mut self.buf) {
                Ok(ev) => ev.into_owned(),
                Err(e) => return Err(self.xml_error(e.to_string())),
            };
            match event {
                Event::Decl(decl) => {
                    if let Some(Ok(enc)) = decl.encoding() {
                        let enc = String::from_utf8_lossy(&enc).to_ascii_lowercase();
                        if enc == "iso-8859-1" || enc == "latin1" || enc == "latin-1" {
                            self.encoding = TextEncoding::Latin1;
                        }
                    }
                }
                Event::Start(e) => {
                    match self.depth {
                        0 => {}
                        1 => self.start_record(&e)?,
                        2 => self.start_field(&e)?,
                        _ => {}
                    }
                    self.depth += 1;
                }
                Event::Empty(e) => match self.depth {
                    1 => {
                        self.start_record(&e)?;
                        if let Some(rec) = self.finish_record() {
                            return Ok(Some(rec));
                        }
                    }
                    2 => {
                        self.start_field(&e)?;
                        self.finish_field();
                    }
                    _ => {}
                },
                Event::Text(t) if self.depth >= 3 => self.push_text(&t.into_inner(), true)?,
                Event::CData(t) if self.depth >= 3 => self.push_text(&t.into_inner(), false)?,
                Event::End(_) => {
                    if self.depth == 0 {
                        return Err(self.xml_error("unexpected closing tag"));
                    }
                    self.depth -= 1;
                    match self.depth {
                        2 => self.finish_field(),
                        1 => {
                            if let Some(rec) = self.finish_record() {
                                return Ok(Some(rec));
                            }
                        }
                        _ => {}
                    }
                }
                Event::Eof => {
                    if self.depth != 0 {
                        return Err(self.xml_error("unexpected end of input inside an element"));
                    }
                    return Ok(None);
                }
                _ => {}
            }
        }
    }
}

fn insert_raw(raw: &mut BTreeMap<String, String>, name: String, value: String) {
    let mut candidate = name.clone();
    let mut n = 1;
    loop {
        if let Entry::Vacant(slot) = raw.entry(candidate) {
            slot.insert(value);
            return;
        }
        n += 1;
        candidate = format!("{name}#{n}");
    }
}

impl<R: BufRead> Iterator for DblpReader<R> {
    type Item = Result<DblpRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.step() {
            Ok(Some(rec)) => Some(Ok(rec)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}
