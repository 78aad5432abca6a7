//! Delimited text input and output: one point per row, coordinates then weight.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use wbkmeans::{Assignment, WeightedDataset};

/// Header handling for point files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Header {
    /// A header is assumed when the first field of the first row is not a number.
    #[default]
    Detect,
    Present,
    Absent,
}

impl Header {
    pub fn from_flag(flag: Option<bool>) -> Self {
        match flag {
            None => Header::Detect,
            Some(true) => Header::Present,
            Some(false) => Header::Absent,
        }
    }
}

fn reader<R: Read>(source: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .delimiter(delimiter)
        .from_reader(source)
}

pub fn read_points(path: &Path, delimiter: u8, header: Header) -> Result<WeightedDataset> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_points(file, delimiter, header).with_context(|| format!("in {}", path.display()))
}

/// Parses rows of `d` coordinates followed by a weight.
///
/// Errors name the 1-based line of the offending row.
pub fn parse_points<R: Read>(source: R, delimiter: u8, header: Header) -> Result<WeightedDataset> {
    let rows = reader(source, delimiter).into_records();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut lines = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut dim = None;
    let mut first = true;
    for record in rows {
        let record = record.context("unreadable row")?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if std::mem::take(&mut first) {
            let skip = match header {
                Header::Present => true,
                Header::Absent => false,
                Header::Detect => record.get(0).is_some_and(|f| f.parse::<f64>().is_err()),
            };
            if skip {
                continue;
            }
        }
        if record.len() < 2 {
            bail!("row {line}: expected at least one coordinate and a weight, found {} field(s)", record.len());
        }
        let d = *dim.get_or_insert(record.len() - 1);
        if record.len() != d + 1 {
            bail!("row {line}: expected {} fields, found {}", d + 1, record.len());
        }
        let mut values = Vec::with_capacity(d + 1);
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| anyhow!("row {line}, column {}: {field:?} is not a number", c + 1))?;
            if !v.is_finite() {
                bail!("row {line}, column {}: value must be finite", c + 1);
            }
            values.push(v);
        }
        let w = values.pop().expect("weight column");
        if w <= 0.0 {
            bail!("row {line}: weight must be positive, got {w}");
        }
        let key: Vec<u64> = values.iter().map(|c| (c + 0.0).to_bits()).collect();
        if let Some(&earlier) = seen.get(&key) {
            bail!(
                "row {line}: duplicates the coordinates of row {}; merge them into one row whose weight is the sum",
                lines[earlier]
            );
        }
        seen.insert(key, weights.len());
        lines.push(line);
        coords.extend(values);
        weights.push(w);
    }
    let Some(dim) = dim else {
        bail!("no data rows");
    };
    Ok(WeightedDataset::from_flat(dim, coords, weights)?)
}

/// Writes a point file that [`parse_points`] reads back bit for bit.
pub fn write_points<W: Write>(mut out: W, data: &WeightedDataset, delimiter: u8) -> Result<()> {
    let sep = delimiter as char;
    for j in 0..data.len() {
        for c in data.point(j) {
            write!(out, "{c}{sep}")?;
        }
        writeln!(out, "{}", data.weight(j))?;
    }
    Ok(())
}

/// Writes `cluster,point,value` triplets for every entry above `threshold`.
pub fn write_triplets<W: Write>(mut out: W, y: &Assignment, threshold: f64) -> Result<()> {
    writeln!(out, "cluster,point,value")?;
    for i in 0..y.clusters() {
        for (j, &v) in y.row(i).iter().enumerate() {
            if v > threshold {
                writeln!(out, "{i},{j},{v}")?;
            }
        }
    }
    Ok(())
}

/// Reads triplets into a `clusters × points` assignment. Missing entries are zero.
pub fn parse_triplets<R: Read>(source: R, clusters: Option<usize>, points: usize) -> Result<Assignment> {
    let mut entries = Vec::new();
    let rows = reader(source, b',').into_records();
    let mut first = true;
    for record in rows {
        let record = record.context("unreadable row")?;
        let line = record.position().map_or(0, |p| p.line());
        if std::mem::take(&mut first) && record.get(0).is_some_and(|f| f.parse::<usize>().is_err()) {
            continue;
        }
        if record.len() != 3 {
            bail!("row {line}: expected cluster, point and value");
        }
        let i: usize = record[0].parse().map_err(|_| anyhow!("row {line}: bad cluster index {:?}", &record[0]))?;
        let j: usize = record[1].parse().map_err(|_| anyhow!("row {line}: bad point index {:?}", &record[1]))?;
        let v: f64 = record[2].parse().map_err(|_| anyhow!("row {line}: bad value {:?}", &record[2]))?;
        if j >= points {
            bail!("row {line}: point {j} out of range for {points} points");
        }
        entries.push((line, i, j, v));
    }
    let k = clusters.unwrap_or_else(|| entries.iter().map(|e| e.1 + 1).max().unwrap_or(0));
    let mut values = vec![0.0; k * points];
    for (line, i, j, v) in entries {
        if i >= k {
            bail!("row {line}: cluster {i} out of range for {k} clusters");
        }
        values[i * points + j] = v;
    }
    Ok(Assignment::new(k, points, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<WeightedDataset> {
        parse_points(text.as_bytes(), b',', Header::Detect)
    }

    #[test]
    fn reads_plain_and_headed_files() {
        let d = parse("0,1\n1,1\n2,1\n").unwrap();
        assert_eq!((d.len(), d.dim()), (3, 1));
        let h = parse("x,y,w\n0,0,1\n1,2,0.5\n").unwrap();
        assert_eq!((h.len(), h.dim()), (2, 2));
        assert_eq!(h.weight(1), 0.5);
        let tabs = parse_points("1\t2\t3\n".as_bytes(), b'\t', Header::Absent).unwrap();
        assert_eq!(tabs.point(0), &[1.0, 2.0]);
    }

    #[test]
    fn rejections_cite_rows() {
        let msg = |t: &str| format!("{:#}", parse(t).unwrap_err());
        assert!(msg("0,1\n1,0\n").contains("row 2: weight must be positive"));
        assert!(msg("0,1\n1,1\n0,2\n").contains("row 3: duplicates the coordinates of row 1; merge"));
        assert!(msg("0,1\n1,x\n").contains("row 2, column 2"));
        assert!(msg("0,0,1\n1,1\n").contains("row 2: expected 3 fields"));
        assert!(msg("x,w\n").contains("no data rows"));
    }

    #[test]
    fn write_then_read_is_exact() {
        let d = WeightedDataset::new(&[vec![0.1, -3e-17], vec![1.0 / 3.0, 2.5e300]], vec![0.7, 1e-5]).unwrap();
        let mut buf = Vec::new();
        write_points(&mut buf, &d, b',').unwrap();
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), d);
    }

    #[test]
    fn triplets_round_trip() {
        let y = Assignment::new(2, 3, vec![1.0, 0.5, 0.0, 0.0, 0.5, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_triplets(&mut buf, &y, 1e-9).unwrap();
        assert_eq!(parse_triplets(&buf[..], None, 3).unwrap(), y);
        assert!(parse_triplets("0,7,1\n".as_bytes(), None, 3).is_err());
    }
}
