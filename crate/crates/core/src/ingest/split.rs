use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::{DblpRecord, PubType};
use super::IngestError;

const HEADER: [&str; 9] = [
    "key", "pub_type", "title", "authors", "year", "venue", "ee_links", "doi", "raw_attrs",
];

/// One per-type output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeFile {
    pub path: PathBuf,
    pub rows: u64,
}

pub type SplitManifest = BTreeMap<PubType, TypeFile>;

pub fn type_file_name(pub_type: PubType) -> String {
    format!("{pub_type}.csv")
}

fn to_row(r: &DblpRecord) -> Result<[String; 9], IngestError> {
    Ok([
        r.key.clone(),
        r.pub_type.to_string(),
        r.title.clone(),
        serde_json::to_string(&r.authors)?,
        r.year.map(|y| y.to_string()).unwrap_or_default(),
        r.venue.clone().unwrap_or_default(),
        serde_json::to_string(&r.ee_links)?,
        r.doi.clone().unwrap_or_default(),
        serde_json::to_string(&r.raw_attrs)?,
    ])
}

fn non_empty(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

fn from_row(row: &csv::StringRecord) -> Result<DblpRecord, IngestError> {
    if row.len() != HEADER.len() {
        return Err(IngestError::Row(format!(
            "expected {} cells, found {}",
            HEADER.len(),
            row.len()
        )));
    }
    let year = match &row[4] {
        "" => None,
        y => Some(y.parse().map_err(|_| IngestError::Row(format!("bad year {y:?}")))?),
    };
    Ok(DblpRecord {
        key: row[0].to_string(),
        pub_type: row[1].parse().map_err(IngestError::Row)?,
        title: row[2].to_string(),
        authors: serde_json::from_str(&row[3])?,
        year,
        venue: non_empty(&row[5]),
        ee_links: serde_json::from_str(&row[6])?,
        doi: non_empty(&row[7]),
        raw_attrs: serde_json::from_str(&row[8])?,
    })
}

struct OpenFile {
    writer: csv::Writer<BufWriter<File>>,
    partial: PathBuf,
    rows: u64,
}

/// Writes one CSV file per publication type present in `records`.
///
/// Files are written as `<type>.csv.partial` and renamed on success, so an
/// aborted split leaves its unfinished files flagged by the suffix.
pub fn split_by_type<I>(records: I, out_dir: &Path) -> Result<SplitManifest, IngestError>
where
    I: IntoIterator<Item = Result<DblpRecord, IngestError>>,
{
    fs::create_dir_all(out_dir)?;
    let mut open: BTreeMap<PubType, OpenFile> = BTreeMap::new();
    for record in records {
        let record = record?;
        let file = match open.get_mut(&record.pub_type) {
            Some(f) => f,
            None => {
                let partial = out_dir.join(format!("{}.partial", type_file_name(record.pub_type)));
                let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(&partial)?));
                writer.write_record(HEADER)?;
                open.entry(record.pub_type).or_insert(OpenFile {
                    writer,
                    partial,
                    rows: 0,
                })
            }
        };
        file.writer.write_record(to_row(&record)?)?;
        file.rows += 1;
    }

    let mut manifest = SplitManifest::new();
    for (pub_type, mut file) in open {
        file.writer.flush()?;
        drop(file.writer);
        let path = out_dir.join(type_file_name(pub_type));
        fs::rename(&file.partial, &path)?;
        manifest.insert(
            pub_type,
            TypeFile {
                path,
                rows: file.rows,
            },
        );
    }
    Ok(manifest)
}

/// Streams the records back out of a file written by [`split_by_type`].
pub fn read_type_file(
    path: &Path,
) -> Result<impl Iterator<Item = Result<DblpRecord, IngestError>>, IngestError> {
    let reader = csv::Reader::from_path(path)?;
    Ok(reader
        .into_records()
        .map(|row| from_row(&row?)))
}
