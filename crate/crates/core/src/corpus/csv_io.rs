//! Baseline / extraction CSV dialect: UTF-8, comma, RFC-4180 quoting, LF
//! line endings, first column "Source filename", then instrument order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use csv::{QuoteStyle, ReaderBuilder, Terminator, WriterBuilder};
use unicode_normalization::UnicodeNormalization;

use super::item::{DataItem, Instrument};
use super::record::{ExtractionRecord, ItemValue, Provenance};
use super::source::Corpus;
use super::CorpusError;

pub const SOURCE_FILENAME_COLUMN: &str = "Source filename";

/// Reads records from any reader. Columns outside the instrument are
/// ignored; every instrument column must be present.
pub fn read_records<R: Read>(
    reader: R,
    instrument: &Instrument,
    provenance: Provenance,
) -> Result<Vec<ExtractionRecord>, CorpusError> {
    let mut rdr = ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr.headers().map_err(malformed)?.clone();

    let header_of = |h: &str| -> String { h.trim_start_matches('\u{feff}').nfc().collect::<String>() };
    let filename_col = headers
        .iter()
        .position(|h| header_of(h).trim().eq_ignore_ascii_case(SOURCE_FILENAME_COLUMN))
        .ok_or_else(|| CorpusError::MissingColumn(SOURCE_FILENAME_COLUMN.to_string()))?;

    let mut columns: Vec<(DataItem, usize)> = Vec::with_capacity(instrument.len());
    for item in instrument.items() {
        let pos = headers
            .iter()
            .position(|h| DataItem::from_header(&header_of(h)) == Some(*item))
            .ok_or_else(|| CorpusError::MissingColumn(item.column_name().to_string()))?;
        columns.push((*item, pos));
    }

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(malformed)?;
        let filename: String = row.get(filename_col).unwrap_or_default().trim().nfc().collect();
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if filename.is_empty() {
            return Err(CorpusError::MalformedCsv { line, reason: "empty source filename".into() });
        }
        let items: BTreeMap<DataItem, ItemValue> = columns
            .iter()
            .map(|(item, pos)| (*item, ItemValue::decode(*item, row.get(*pos).unwrap_or_default())))
            .collect();
        out.push(ExtractionRecord::new(filename, provenance, items, instrument)?);
    }
    Ok(out)
}

fn malformed(e: csv::Error) -> CorpusError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    CorpusError::MalformedCsv { line, reason: e.to_string() }
}

/// Loads a CSV of records, checking every filename against `corpus` when
/// one is given.
pub fn load_records_csv(
    path: &Path,
    instrument: &Instrument,
    provenance: Provenance,
    corpus: Option<&Corpus>,
) -> Result<Vec<ExtractionRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let records = read_records(io::BufReader::new(file), instrument, provenance)?;
    if let Some(corpus) = corpus {
        for r in &records {
            if corpus.get(&r.source_id).is_none() {
                return Err(CorpusError::UnknownSourceFilename(r.source_filename.clone()));
            }
        }
    }
    Ok(records)
}

pub fn load_baseline_csv(
    path: &Path,
    instrument: &Instrument,
    corpus: Option<&Corpus>,
) -> Result<Vec<ExtractionRecord>, CorpusError> {
    load_records_csv(path, instrument, Provenance::HumanBaseline, corpus)
}

/// Writes records in canonical form. Rows are ordered by the corpus author
/// sort key when a corpus is given, then by source id.
pub fn write_records<W: Write>(
    records: &[ExtractionRecord],
    instrument: &Instrument,
    corpus: Option<&Corpus>,
    writer: W,
) -> Result<(), CorpusError> {
    let mut wtr = WriterBuilder::new()
        .quote_style(QuoteStyle::Necessary)
        .terminator(Terminator::Any(b'\n'))
        .from_writer(writer);

    let mut header = vec![SOURCE_FILENAME_COLUMN];
    header.extend(instrument.items().iter().map(|i| i.column_name()));
    wtr.write_record(&header).map_err(csv_io)?;

    let mut ordered: Vec<&ExtractionRecord> = records.iter().collect();
    ordered.sort_by_cached_key(|r| {
        let key = corpus
            .and_then(|c| c.get(&r.source_id))
            .map(|s| s.author_sort_key.to_lowercase())
            .unwrap_or_else(|| r.source_id.as_str().to_lowercase());
        (key, r.source_id.clone())
    });

    for r in ordered {
        let mut row = Vec::with_capacity(instrument.len() + 1);
        row.push(r.source_filename.clone());
        for item in instrument.items() {
            let value = r.get(*item).ok_or_else(|| CorpusError::InvalidRecord {
                source_id: r.source_id.clone(),
                reason: format!("record does not cover {item}"),
            })?;
            row.push(value.encode());
        }
        wtr.write_record(&row).map_err(csv_io)?;
    }
    wtr.flush().map_err(CorpusError::IoFailure)?;
    Ok(())
}

fn csv_io(e: csv::Error) -> CorpusError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => CorpusError::IoFailure(e),
        other => CorpusError::IoFailure(io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_baseline_csv(
    records: &[ExtractionRecord],
    instrument: &Instrument,
    corpus: Option<&Corpus>,
    path: &Path,
) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    write_records(records, instrument, corpus, &mut buf)?;
    std::fs::write(path, buf).map_err(CorpusError::IoFailure)
}

/// Canonical CSV bytes for a record set.
pub fn records_to_csv_bytes(
    records: &[ExtractionRecord],
    instrument: &Instrument,
    corpus: Option<&Corpus>,
) -> Result<Vec<u8>, CorpusError> {
    let mut buf = Vec::new();
    write_records(records, instrument, corpus, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::record::{Excerpt, Sentinel};

    #[test]
    fn empty_record_list_writes_header_only() {
        let bytes = records_to_csv_bytes(&[], &Instrument::extraction(), None).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "Source filename,Author(s),Publication year,Title,Implementation principles,Strengths,Weaknesses,Opportunities,Threats\n"
        );
    }

    #[test]
    fn all_sentinel_record_writes_sentinel_strings() {
        let inst = Instrument::new(DataItem::KEY_FINDINGS);
        let items = inst.items().iter().map(|i| (*i, ItemValue::Sentinel(Sentinel::Unstated))).collect();
        let r = ExtractionRecord::new("a.pdf", Provenance::HumanBaseline, items, &inst).unwrap();
        let s = String::from_utf8(records_to_csv_bytes(&[r], &inst, None).unwrap()).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), "a.pdf,Unstated,Unstated,Unstated,Unstated,Unstated");
    }

    #[test]
    fn missing_column_reported() {
        let csv = "Source filename,Author(s),Title\nx.pdf,A,T\n";
        let err = read_records(csv.as_bytes(), &Instrument::extraction(), Provenance::HumanBaseline).unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn(c) if c == "Publication year"));
    }

    #[test]
    fn ragged_row_is_malformed() {
        let csv = "Source filename,Title\nx.pdf,T,extra\n";
        let inst = Instrument::new([DataItem::Title]);
        let err = read_records(csv.as_bytes(), &inst, Provenance::HumanBaseline).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedCsv { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn unknown_filename_rejected_against_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        std::fs::write(&p, "Source filename,Title\nghost.pdf,T\n").unwrap();
        let corpus = Corpus::new(vec![crate::corpus::EvidenceSource::new("real.pdf", "R", "x").unwrap()]).unwrap();
        let err = load_baseline_csv(&p, &Instrument::new([DataItem::Title]), Some(&corpus)).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownSourceFilename(f) if f == "ghost.pdf"));
    }

    #[test]
    fn header_aliases_and_bom_accepted() {
        let csv = "\u{feff}Source filename,Publication date,Implementation principle(s) and/or steps\nx.pdf,2020,\"• a\n• b\"\n";
        let inst = Instrument::new([DataItem::PublicationYear, DataItem::ImplementationPrinciples]);
        let recs = read_records(csv.as_bytes(), &inst, Provenance::HumanBaseline).unwrap();
        assert_eq!(recs[0].excerpts(DataItem::ImplementationPrinciples), &[Excerpt::new("a", 0), Excerpt::new("b", 1)]);
    }
}
