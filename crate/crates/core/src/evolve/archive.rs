//! CSV export of search archives and fronts.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::qgru::{Genome, NUM_BLOCKS};

use super::{ArchiveEntry, Objectives};

fn header() -> Vec<String> {
    let mut h: Vec<String> =
        ["generation", "index", "accuracy", "size_bits", "size_complement"].iter().map(|s| s.to_string()).collect();
    h.extend((0..NUM_BLOCKS).map(|i| format!("g{i}")));
    h
}

fn record(e: &ArchiveEntry) -> Vec<String> {
    let mut r = vec![
        e.generation.to_string(),
        e.index.to_string(),
        e.fitness.accuracy.to_string(),
        e.size_bits.to_string(),
        e.fitness.size_complement.to_string(),
    ];
    r.extend(e.genome.genes().iter().map(|g| g.to_string()));
    r
}

/// Streams archive rows to disk, flushing after every row so an interrupted
/// search leaves a usable prefix. Lines starting with `#` carry the
/// effective configuration.
pub struct ArchiveWriter {
    inner: csv::Writer<File>,
}

impl ArchiveWriter {
    pub fn create(path: &Path, comments: &[String]) -> Result<Self> {
        let mut file = File::create(path)?;
        for c in comments {
            writeln!(file, "# {c}")?;
        }
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header())?;
        inner.flush()?;
        Ok(ArchiveWriter { inner })
    }

    pub fn write(&mut self, e: &ArchiveEntry) -> Result<()> {
        self.inner.write_record(record(e))?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_individuals(path: &Path, comments: &[String], rows: &[ArchiveEntry]) -> Result<()> {
    let mut w = ArchiveWriter::create(path, comments)?;
    rows.iter().try_for_each(|e| w.write(e))
}

pub type ArchiveRow = ArchiveEntry;

/// Reads a file written by [`ArchiveWriter`], skipping comment lines.
pub fn read_archive(path: &Path) -> Result<Vec<ArchiveRow>> {
    let mut body = String::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.starts_with('#') {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    if rdr.headers()?.iter().collect::<Vec<_>>() != header() {
        return Err(Error::Config(format!("{} does not have the archive header", path.display())));
    }
    let bad = |what: &str| Error::Config(format!("{}: malformed {what}", path.display()));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| rec.get(i).ok_or_else(|| bad("row"));
        let genes: Vec<u8> =
            (5..5 + NUM_BLOCKS).map(|i| num(i)?.parse().map_err(|_| bad("gene"))).collect::<Result<_>>()?;
        rows.push(ArchiveEntry {
            generation: num(0)?.parse().map_err(|_| bad("generation"))?,
            index: num(1)?.parse().map_err(|_| bad("index"))?,
            fitness: Objectives {
                accuracy: num(2)?.parse().map_err(|_| bad("accuracy"))?,
                size_complement: num(4)?.parse().map_err(|_| bad("size_complement"))?,
            },
            size_bits: num(3)?.parse().map_err(|_| bad("size_bits"))?,
            genome: Genome::try_from(genes)?,
        });
    }
    Ok(rows)
}
