//! Dataset files.
//!
//! Text form: one header line
//! `circscatter-v1 T0=<n> C0=<n> P=<n> task=<class|reg> classes=<l,l,..>`
//! followed by one comma-separated row per sample: `C0·T0` features (17
//! significant digits), then the integer label or `P` targets, then the
//! sample id.
//!
//! Binary form (`.cscb`): magic `CSC1`, then little-endian `u32 T0, u32 C0,
//! u32 P, u8 task, u8 class count, class labels, u64 N`, then per sample the
//! features and targets as `f64` (the label is stored as an `f64`), then a
//! `u32` byte length and the UTF-8 id.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, FarFieldSample, Target, Task};
use crate::error::{Error, Result};
use crate::geometry::ShapeClass;

pub const TEXT_MAGIC: &str = "circscatter-v1";
pub const BINARY_MAGIC: &[u8; 4] = b"CSC1";

/// Writes binary when the extension is `cscb`, text otherwise.
pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "cscb") {
        write_dataset_binary(path, data)
    } else {
        write_dataset_text(path, data)
    }
}

/// Reads either form, detected from the leading bytes.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    drop(file);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 4 && &magic == BINARY_MAGIC {
        read_binary(BufReader::new(file)).map_err(|e| relabel(e, path))
    } else {
        read_text(BufReader::new(file)).map_err(|e| relabel(e, path))
    }
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

fn header_line(d: &Dataset) -> String {
    let classes: Vec<String> = d.classes.iter().map(|c| c.label().to_string()).collect();
    format!(
        "{TEXT_MAGIC} T0={} C0={} P={} task={} classes={}",
        d.angles,
        d.channels,
        d.target_dim,
        d.task.tag(),
        classes.join(",")
    )
}

pub fn write_dataset_text(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    data.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header_line(data)).map_err(io)?;
    let mut line = String::new();
    for s in &data.samples {
        line.clear();
        for v in &s.features {
            push_f64(&mut line, *v);
        }
        match &s.target {
            Target::Label(c) => line.push_str(&format!("{},", c.label())),
            Target::Params(p) => p.iter().for_each(|v| push_f64(&mut line, *v)),
        }
        line.push_str(&s.shape_id);
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn push_f64(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(line, "{v:.16e},");
}

struct Header {
    angles: usize,
    channels: usize,
    target_dim: usize,
    task: Task,
    classes: Vec<ShapeClass>,
}

fn parse_header(line: &str) -> Result<Header> {
    let err = |msg: String| Error::Parse { line: 1, msg };
    let mut parts = line.split_whitespace();
    if parts.next() != Some(TEXT_MAGIC) {
        return Err(err(format!("expected '{TEXT_MAGIC}' header")));
    }
    let (mut t0, mut c0, mut p, mut task, mut classes) = (None, None, None, None, None);
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| err(format!("malformed field '{kv}'")))?;
        let num = || v.parse::<usize>().map_err(|_| err(format!("bad value for {k}: '{v}'")));
        match k {
            "T0" => t0 = Some(num()?),
            "C0" => c0 = Some(num()?),
            "P" => p = Some(num()?),
            "task" => {
                task = Some(match v {
                    "class" => Task::Classification,
                    "reg" => Task::Regression,
                    _ => return Err(err(format!("unknown task '{v}'"))),
                })
            }
            "classes" => {
                classes = Some(
                    v.split(',')
                        .map(|l| parse_label(l).ok_or_else(|| err(format!("unknown class tag '{l}'"))))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            _ => return Err(err(format!("unknown header field '{k}'"))),
        }
    }
    let missing = |f: &str| err(format!("header lacks {f}"));
    Ok(Header {
        angles: t0.ok_or_else(|| missing("T0"))?,
        channels: c0.ok_or_else(|| missing("C0"))?,
        target_dim: p.ok_or_else(|| missing("P"))?,
        task: task.ok_or_else(|| missing("task"))?,
        classes: classes.ok_or_else(|| missing("classes"))?,
    })
}

fn parse_label(s: &str) -> Option<ShapeClass> {
    s.trim().parse::<u8>().ok().and_then(ShapeClass::from_label)
}

fn read_text<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?
        .map_err(|e| Error::io("<dataset>", e))?;
    let h = parse_header(&first)?;
    let dim = h.angles * h.channels;
    let n_targets = match h.task {
        Task::Classification => 1,
        Task::Regression => h.target_dim,
    };
    let width = dim + n_targets + 1;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno, msg };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(err(format!(
                "expected {width} fields (T0·C0 = {dim}), found {}",
                fields.len()
            )));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err(format!("bad number '{s}'")));
        let features = fields[..dim].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let target = match h.task {
            Task::Classification => {
                let c = parse_label(fields[dim]).ok_or_else(|| err(format!("unknown class tag '{}'", fields[dim])))?;
                if !h.classes.contains(&c) {
                    return Err(err(format!("class {} not declared in header", c.label())));
                }
                Target::Label(c)
            }
            Task::Regression => Target::Params(
                fields[dim..dim + n_targets]
                    .iter()
                    .map(|s| num(s))
                    .collect::<Result<_>>()?,
            ),
        };
        samples.push(FarFieldSample {
            features,
            target,
            shape_id: fields[width - 1].to_string(),
        });
    }
    Ok(Dataset {
        angles: h.angles,
        channels: h.channels,
        task: h.task,
        classes: h.classes,
        target_dim: h.target_dim,
        samples,
    })
}

pub fn write_dataset_binary(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    data.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(64);
    buf.extend_from_slice(BINARY_MAGIC);
    for v in [data.angles, data.channels, data.target_dim] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.push(match data.task {
        Task::Classification => 0,
        Task::Regression => 1,
    });
    buf.push(data.classes.len() as u8);
    buf.extend(data.classes.iter().map(|c| c.label()));
    buf.extend_from_slice(&(data.samples.len() as u64).to_le_bytes());
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    for s in &data.samples {
        buf.clear();
        s.features.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
        match &s.target {
            Target::Label(c) => buf.extend_from_slice(&(c.label() as f64).to_le_bytes()),
            Target::Params(p) => p.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
        }
        buf.extend_from_slice(&(s.shape_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(s.shape_id.as_bytes());
        w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_binary<R: Read>(mut r: R) -> Result<Dataset> {
    let mut pos = 0usize;
    let mut take = |n: usize, r: &mut R| -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        r.read_exact(&mut b).map_err(|_| Error::Parse {
            line: 0,
            msg: format!("truncated at byte {pos}"),
        })?;
        pos += n;
        Ok(b)
    };
    let bad = |msg: String| Error::Parse { line: 0, msg };
    if take(4, &mut r)? != BINARY_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    let head = take(14, &mut r)?;
    let (angles, channels, target_dim) = (u32_at(&head[0..4]), u32_at(&head[4..8]), u32_at(&head[8..12]));
    let task = match head[12] {
        0 => Task::Classification,
        1 => Task::Regression,
        t => return Err(bad(format!("unknown task byte {t}"))),
    };
    let classes = take(head[13] as usize, &mut r)?
        .into_iter()
        .map(|l| ShapeClass::from_label(l).ok_or_else(|| bad(format!("unknown class tag {l}"))))
        .collect::<Result<Vec<_>>>()?;
    let n = u64::from_le_bytes(take(8, &mut r)?.try_into().expect("8 bytes")) as usize;
    let dim = angles * channels;
    let n_targets = if task == Task::Classification { 1 } else { target_dim };
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let raw = take(8 * (dim + n_targets), &mut r)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let target = match task {
            Task::Classification => {
                let l = vals[dim];
                let c = (l.fract() == 0.0 && (1.0..=3.0).contains(&l))
                    .then(|| ShapeClass::from_label(l as u8))
                    .flatten()
                    .ok_or_else(|| bad(format!("sample {i}: unknown class tag {l}")))?;
                Target::Label(c)
            }
            Task::Regression => Target::Params(vals[dim..].to_vec()),
        };
        let len = u32_at(&take(4, &mut r)?);
        let id = String::from_utf8(take(len, &mut r)?).map_err(|_| bad(format!("sample {i}: id not UTF-8")))?;
        samples.push(FarFieldSample {
            features: vals[..dim].to_vec(),
            target,
            shape_id: id,
        });
    }
    let d = Dataset {
        angles,
        channels,
        task,
        classes,
        target_dim,
        samples,
    };
    d.validate()?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_dataset, GenerationSpec};
    use crate::geometry::{ImpedanceMode, ScatterConfig};

    fn sample_data(task: Task) -> Dataset {
        let classes = match task {
            Task::Classification => ShapeClass::ALL.to_vec(),
            Task::Regression => vec![ShapeClass::Kite],
        };
        generate_dataset(&GenerationSpec {
            classes,
            count: 9,
            config: ScatterConfig::standard(32, 4).unwrap(),
            seed: 3,
            impedance: ImpedanceMode::Variable,
            task,
        })
        .unwrap()
    }

    #[test]
    fn text_and_binary_roundtrip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for task in [Task::Classification, Task::Regression] {
            let d = sample_data(task);
            for name in ["d.csc", "d.cscb"] {
                let p = dir.path().join(name);
                write_dataset(&p, &d).unwrap();
                let back = read_dataset(&p).unwrap();
                assert_eq!(back, d, "{name}");
                for (a, b) in d.samples.iter().zip(&back.samples) {
                    assert!(a
                        .features
                        .iter()
                        .zip(&b.features)
                        .all(|(x, y)| x.to_bits() == y.to_bits()));
                }
            }
        }
    }

    #[test]
    fn header_row_mismatch_reports_first_bad_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csc");
        std::fs::write(
            &p,
            "circscatter-v1 T0=2 C0=2 P=0 task=class classes=1,2,3\n1,2,3,4,1,a\n1,2,3,1,b\n",
        )
        .unwrap();
        match read_dataset(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_class_tag_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csc");
        std::fs::write(
            &p,
            "circscatter-v1 T0=2 C0=1 P=0 task=class classes=1,2,3\n0.5,0.25,4,id0\n",
        )
        .unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "circscatter-v1 T0=2 C0=1 P=0 task=class classes=1,4\n").unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csc");
        std::fs::write(&p, "something-else T0=2\n").unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Parse { line: 1, .. })));
    }
}
