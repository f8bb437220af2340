//! Signal, image and report files.
//!
//! A signal file is an ASCII header followed by little-endian `f32` samples:
//!
//! ```text
//! CEUI-SIGNAL 1\n
//! fs <f64>\n
//! t0 <f64>\n
//! length <u64>\n
//! dtype f32\n
//! endian little\n
//! end\n
//! <length * 4 bytes>
//! ```

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mmode::MModeImage;
use crate::signal::RfRecord;

const MAGIC: &str = "CEUI-SIGNAL 1";

pub fn write_signal(record: &RfRecord, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(
        out,
        "{MAGIC}\nfs {:?}\nt0 {:?}\nlength {}\ndtype f32\nendian little\nend\n",
        record.fs,
        record.t0,
        record.len()
    )?;
    for &v in &record.samples {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_signal(path: &Path) -> Result<RfRecord> {
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = BufReader::new(File::open(path)?);
    let mut lines = Vec::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(malformed("missing `end` line".into()));
        }
        let line = line.trim_end_matches('\n').to_string();
        if line == "end" {
            break;
        }
        if lines.len() > 16 {
            return Err(malformed("header too long".into()));
        }
        lines.push(line);
    }
    if lines.first().map(String::as_str) != Some(MAGIC) {
        return Err(malformed(format!("expected `{MAGIC}` on the first line")));
    }
    let field = |key: &str| -> Result<&str> {
        lines[1..]
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|rest| rest.strip_prefix(' ')))
            .ok_or_else(|| malformed(format!("missing `{key}`")))
    };
    let number = |key: &str| -> Result<f64> {
        field(key)?
            .parse::<f64>()
            .map_err(|e| malformed(format!("bad `{key}`: {e}")))
    };
    let fs = number("fs")?;
    let t0 = number("t0")?;
    let length: u64 = field("length")?
        .parse()
        .map_err(|e| malformed(format!("bad `length`: {e}")))?;
    if field("dtype")? != "f32" {
        return Err(malformed("only dtype f32 is supported".into()));
    }
    if field("endian")? != "little" {
        return Err(malformed("only little-endian payloads are supported".into()));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let expected = length * 4;
    if payload.len() as u64 != expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            actual: payload.len() as u64,
        });
    }
    let samples = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    RfRecord::new(samples, fs, t0).map_err(|e| malformed(e.to_string()))
}

/// First row: slow-time grid; first column: depth grid.
pub fn write_mmode_csv(image: &MModeImage, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut line = String::from("depth_m\\time_s");
    for t in &image.time_grid {
        write!(line, ",{t:e}").expect("write to string");
    }
    writeln!(out, "{line}")?;
    for (d, z) in image.depth_grid.iter().enumerate() {
        line.clear();
        write!(line, "{z:e}").expect("write to string");
        for w in 0..image.n_columns() {
            write!(line, ",{:.6e}", image.get(d, w)).expect("write to string");
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_mmode_csv`].
pub fn read_mmode_csv(path: &Path) -> Result<MModeImage> {
    let bad = |message: String| Error::Config {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path)?;
    let mut rows = text.lines();
    let header = rows.next().ok_or_else(|| bad("empty file".into()))?;
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
    let time_grid = header.split(',').skip(1).map(parse).collect::<Result<Vec<_>>>()?;
    let mut depth_grid = Vec::new();
    let mut by_row = Vec::new();
    for row in rows {
        let mut cells = row.split(',');
        depth_grid.push(parse(cells.next().unwrap_or(""))?);
        let vals = cells.map(parse).collect::<Result<Vec<_>>>()?;
        if vals.len() != time_grid.len() {
            return Err(bad(format!("row {} has {} values", depth_grid.len(), vals.len())));
        }
        by_row.push(vals);
    }
    let n = depth_grid.len();
    let mut values = vec![0.0; n * time_grid.len()];
    for (d, vals) in by_row.iter().enumerate() {
        for (w, v) in vals.iter().enumerate() {
            values[w * n + d] = *v;
        }
    }
    Ok(MModeImage {
        values,
        depth_grid,
        time_grid,
    })
}

/// Gray level of `v` after log compression over `db_range` below `max`.
pub fn gray_level(v: f64, max: f64, db_range: f64) -> u8 {
    if max <= 0.0 {
        return 0;
    }
    let db = 20.0 * (v / max).log10();
    let unit = (1.0 + db / db_range).clamp(0.0, 1.0);
    if unit.is_nan() {
        0
    } else {
        (255.0 * unit).round() as u8
    }
}

/// 8-bit grayscale PNG, depth down and slow time across.
pub fn write_mmode_png(image: &MModeImage, path: &Path, db_range: f64) -> Result<()> {
    if !(db_range > 0.0) {
        return Err(Error::InvalidArgument(format!("dynamic range must be positive, got {db_range}")));
    }
    let width = image.n_columns() as u32;
    let height = image.n_depths() as u32;
    let max = image.max();
    let mut pixels = Vec::with_capacity((width * height) as usize);
    for d in 0..image.n_depths() {
        for w in 0..image.n_columns() {
            pixels.push(gray_level(image.get(d, w), max, db_range));
        }
    }
    let mut encoder = png::Encoder::new(BufWriter::new(File::create(path)?), width, height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&pixels)?;
    writer.finish()?;
    Ok(())
}

/// Flat `key = value` report, one entry per line in the given order.
pub fn write_report(entries: &[(String, String)], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (k, v) in entries {
        writeln!(out, "{k} = {v}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv_table(header: &[&str], rows: &[Vec<String>], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.sig");
        let rec = RfRecord::new(vec![0.5, -1.25, 3.0, 1e-3f32 as f64], 30e6, -3.3e-7).unwrap();
        write_signal(&rec, &path).unwrap();
        assert_eq!(read_signal(&path).unwrap(), rec);
        let empty = RfRecord::new(Vec::new(), 30e6, 0.0).unwrap();
        write_signal(&empty, &path).unwrap();
        assert_eq!(read_signal(&path).unwrap(), empty);
    }

    #[test]
    fn truncated_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.sig");
        write_signal(&RfRecord::new(vec![1.0; 10], 30e6, 0.0).unwrap(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 6]).unwrap();
        match read_signal(&path) {
            Err(Error::TruncatedPayload { expected, actual, .. }) => {
                assert_eq!((expected, actual), (40, 34));
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, b"hello\nend\n").unwrap();
        assert!(matches!(read_signal(&path), Err(Error::MalformedHeader { .. })));
    }

    fn small_image() -> MModeImage {
        MModeImage {
            values: vec![1.0, 0.1, 0.01, 0.5],
            depth_grid: vec![0.0, 1e-4],
            time_grid: vec![0.0, 7e-7],
        }
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let img = small_image();
        write_mmode_csv(&img, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.split(',').count() == 3));
        assert_eq!(read_mmode_csv(&path).unwrap(), img);
    }

    #[test]
    fn png_mapping() {
        assert_eq!(gray_level(1.0, 1.0, 40.0), 255);
        assert_eq!(gray_level(0.01, 1.0, 40.0), 0);
        assert_eq!(gray_level(0.0, 1.0, 40.0), 0);
        assert_eq!(gray_level(0.1, 1.0, 40.0), 128);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let uniform = MModeImage {
            values: vec![2.0; 6],
            depth_grid: vec![0.0, 1.0, 2.0],
            time_grid: vec![0.0, 1.0],
        };
        write_mmode_png(&uniform, &path, 40.0).unwrap();
        let decoder = png::Decoder::new(BufReader::new(File::open(&path).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (2, 3));
        assert!(buf[..info.buffer_size()].iter().all(|&p| p == 255));
    }
}
