//! File codecs: binary PGM images, the KSAL float-map format, JSON-Lines
//! proposal and report files, the KTSR named-tensor snapshot format, and the
//! metric CSV emitters. All formats round-trip bit-exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{FixationMap, Frame, Rect, SaliencyMap};
use crate::metrics::MetricRecord;
use crate::selection::{Proposal, RoiReport};

/// Cursor over a fully loaded file that reports the byte offset of any
/// decoding failure.
struct Scanner<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Scanner<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Scanner { buf, pos: 0, path }
    }

    fn fail<T>(&self, kind: impl Into<String>) -> Result<T> {
        Err(Error::codec(self.path, self.pos as u64, kind))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return self.fail(format!(
                "unexpected end of file (needed {n} bytes, {} left)",
                self.buf.len() - self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32_le(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32_le(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn peek(&self) -> Option<u8> {
        self.buf.get(self.pos).copied()
    }

    /// Skip ASCII whitespace and '#'-to-end-of-line comments.
    fn skip_space_and_comments(&mut self) {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(b) = self.peek() {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn ascii_uint(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut v: u64 = 0;
        while let Some(b) = self.peek() {
            if b.is_ascii_digit() {
                v = v * 10 + (b - b'0') as u64;
                if v > u32::MAX as u64 {
                    return self.fail("integer overflow in header");
                }
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return self.fail("expected an unsigned integer");
        }
        Ok(v as u32)
    }
}

fn load(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn store(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a binary (P5) grayscale PGM with maxval 255.
pub fn read_pgm(path: &Path) -> Result<Frame> {
    let buf = load(path)?;
    let mut sc = Scanner::new(&buf, path);
    if sc.take(2)? != b"P5" {
        sc.pos = 0;
        return sc.fail("bad magic (expected P5)");
    }
    sc.skip_space_and_comments();
    let w = sc.ascii_uint()? as usize;
    sc.skip_space_and_comments();
    let h = sc.ascii_uint()? as usize;
    sc.skip_space_and_comments();
    let maxval = sc.ascii_uint()?;
    if maxval != 255 {
        return sc.fail(format!("unsupported maxval {maxval} (expected 255)"));
    }
    match sc.peek() {
        Some(b) if b.is_ascii_whitespace() => sc.pos += 1,
        _ => return sc.fail("expected single whitespace after maxval"),
    }
    if w == 0 || h == 0 {
        sc.pos = 0;
        return sc.fail(format!("degenerate dimensions {w}x{h}"));
    }
    let data = sc.take(w * h)?.to_vec();
    if sc.pos != buf.len() {
        return sc.fail(format!("{} trailing bytes", buf.len() - sc.pos));
    }
    Frame::from_vec(h, w, data)
}

/// Write a binary (P5) grayscale PGM with maxval 255.
pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.data());
    store(path, &out)
}

/// Read a binary fixation map stored as PGM: zero pixels are unfixated,
/// anything else is a fixation.
pub fn read_fixation_pgm(path: &Path) -> Result<FixationMap> {
    let f = read_pgm(path)?;
    let data = f.data().iter().map(|&p| p != 0).collect();
    FixationMap::from_vec(f.height(), f.width(), data)
}

/// Write a fixation map as a 0/255 PGM.
pub fn write_fixation_pgm(path: &Path, fx: &FixationMap) -> Result<()> {
    let data = fx.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_pgm(path, &Frame::from_vec(fx.height(), fx.width(), data)?)
}

/// Read a KSAL float map: magic "KSAL", width and height as 32-bit
/// little-endian unsigned, then row-major 32-bit little-endian floats.
pub fn read_ksal(path: &Path) -> Result<SaliencyMap> {
    let buf = load(path)?;
    let mut sc = Scanner::new(&buf, path);
    if sc.take(4)? != b"KSAL" {
        sc.pos = 0;
        return sc.fail("bad magic (expected KSAL)");
    }
    let w = sc.u32_le()? as usize;
    let h = sc.u32_le()? as usize;
    if w == 0 || h == 0 {
        return sc.fail(format!("degenerate dimensions {w}x{h}"));
    }
    let mut data = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        data.push(sc.f32_le()? as f64);
    }
    if sc.pos != buf.len() {
        return sc.fail(format!("{} trailing bytes", buf.len() - sc.pos));
    }
    SaliencyMap::from_vec(h, w, data)
}

/// Write a KSAL float map (values narrowed to f32).
pub fn write_ksal(path: &Path, map: &SaliencyMap) -> Result<()> {
    let mut out = Vec::with_capacity(12 + 4 * map.data().len());
    out.extend_from_slice(b"KSAL");
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for &v in map.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    store(path, &out)
}

/// One proposal line of the JSON-Lines detection format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProposalRecord {
    frame: usize,
    class: i64,
    bbox: [i64; 4],
    conf: f64,
}

/// Read a JSON-Lines proposal file into (1-based frame, proposal) pairs, in
/// file order.
pub fn read_proposals(path: &Path) -> Result<Vec<(usize, Proposal)>> {
    let buf = load(path)?;
    let text = std::str::from_utf8(&buf)
        .map_err(|e| Error::codec(path, e.valid_up_to() as u64, "invalid UTF-8"))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.split('\n') {
        let line_offset = offset;
        offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProposalRecord = serde_json::from_str(line)
            .map_err(|e| Error::codec(path, line_offset, format!("bad proposal line: {e}")))?;
        if rec.frame == 0 {
            return Err(Error::codec(path, line_offset, "frame index must be >= 1"));
        }
        let [x1, y1, x2, y2] = rec.bbox;
        if x1 < 0 || y1 < 0 || x2 <= x1 || y2 <= y1 {
            return Err(Error::codec(
                path,
                line_offset,
                format!("invalid bbox [{x1}, {y1}, {x2}, {y2}]"),
            ));
        }
        if !(0.0..=1.0).contains(&rec.conf) {
            return Err(Error::codec(
                path,
                line_offset,
                format!("confidence {} outside [0, 1]", rec.conf),
            ));
        }
        out.push((
            rec.frame,
            Proposal {
                class_id: rec.class,
                bbox: Rect::new(x1 as usize, y1 as usize, x2 as usize, y2 as usize),
                det_conf: rec.conf,
            },
        ));
    }
    Ok(out)
}

/// Write per-frame proposal lists as JSON Lines (frames are 1-based).
pub fn write_proposals(path: &Path, per_frame: &[Vec<Proposal>]) -> Result<()> {
    let mut out = String::new();
    for (t, proposals) in per_frame.iter().enumerate() {
        for p in proposals {
            let rec = ProposalRecord {
                frame: t + 1,
                class: p.class_id,
                bbox: [
                    p.bbox.x1 as i64,
                    p.bbox.y1 as i64,
                    p.bbox.x2 as i64,
                    p.bbox.y2 as i64,
                ],
                conf: p.det_conf,
            };
            out.push_str(&serde_json::to_string(&rec).expect("proposal serializes"));
            out.push('\n');
        }
    }
    store(path, out.as_bytes())
}

/// Write selection audit reports as JSON Lines.
pub fn write_roi_reports(path: &Path, reports: &[RoiReport]) -> Result<()> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).expect("report serializes"));
        out.push('\n');
    }
    store(path, out.as_bytes())
}

/// Read selection audit reports back from JSON Lines.
pub fn read_roi_reports(path: &Path) -> Result<Vec<RoiReport>> {
    let buf = load(path)?;
    let text = std::str::from_utf8(&buf)
        .map_err(|e| Error::codec(path, e.valid_up_to() as u64, "invalid UTF-8"))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.split('\n') {
        let line_offset = offset;
        offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RoiReport = serde_json::from_str(line)
            .map_err(|e| Error::codec(path, line_offset, format!("bad report line: {e}")))?;
        out.push(rec);
    }
    Ok(out)
}

/// One named tensor of a KTSR snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dims: Vec<u32>,
    /// Row-major values (stored as f32 on disk).
    pub data: Vec<f64>,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, data: Vec<f64>) -> Self {
        let rec = TensorRecord {
            name: name.into(),
            dims,
            data,
        };
        debug_assert_eq!(
            rec.dims.iter().map(|&d| d as usize).product::<usize>(),
            rec.data.len()
        );
        rec
    }
}

/// Read a KTSR named-tensor snapshot: magic "KTSR", record count, then per
/// record a length-prefixed name, a dim count, the dims, and the f32 values,
/// all little-endian.
pub fn read_ktsr(path: &Path) -> Result<Vec<TensorRecord>> {
    let buf = load(path)?;
    let mut sc = Scanner::new(&buf, path);
    if sc.take(4)? != b"KTSR" {
        sc.pos = 0;
        return sc.fail("bad magic (expected KTSR)");
    }
    let count = sc.u32_le()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = sc.u32_le()? as usize;
        if name_len > 4096 {
            return sc.fail(format!("unreasonable tensor name length {name_len}"));
        }
        let name_pos = sc.pos;
        let name = std::str::from_utf8(sc.take(name_len)?)
            .map_err(|_| Error::codec(path, name_pos as u64, "tensor name is not UTF-8"))?
            .to_string();
        let ndim = sc.u32_le()? as usize;
        if ndim == 0 || ndim > 8 {
            return sc.fail(format!("unsupported rank {ndim}"));
        }
        let mut dims = Vec::with_capacity(ndim);
        let mut total = 1usize;
        for _ in 0..ndim {
            let d = sc.u32_le()?;
            if d == 0 {
                return sc.fail("zero-length dimension");
            }
            total = total
                .checked_mul(d as usize)
                .filter(|&t| t <= 1 << 28)
                .ok_or_else(|| Error::codec(path, sc.pos as u64, "tensor too large"))?;
            dims.push(d);
        }
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            data.push(sc.f32_le()? as f64);
        }
        out.push(TensorRecord { name, dims, data });
    }
    if sc.pos != buf.len() {
        return sc.fail(format!("{} trailing bytes", buf.len() - sc.pos));
    }
    Ok(out)
}

/// Write a KTSR named-tensor snapshot (values narrowed to f32).
pub fn write_ktsr(path: &Path, records: &[TensorRecord]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(b"KTSR");
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.extend_from_slice(&(r.dims.len() as u32).to_le_bytes());
        for &d in &r.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in &r.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    store(path, &out)
}

/// Write per-frame scalar metrics plus an aggregate mean row.
pub fn write_metrics_csv(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut out = String::from("frame,cc,sim,emd,auc_j\n");
    let mut sums = [0.0f64; 4];
    for (t, r) in records.iter().enumerate() {
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?}\n",
            t + 1,
            r.cc,
            r.sim,
            r.emd,
            r.auc_j
        ));
        for (s, v) in sums.iter_mut().zip([r.cc, r.sim, r.emd, r.auc_j]) {
            *s += v;
        }
    }
    let n = records.len().max(1) as f64;
    out.push_str(&format!(
        "mean,{:?},{:?},{:?},{:?}\n",
        sums[0] / n,
        sums[1] / n,
        sums[2] / n,
        sums[3] / n
    ));
    store(path, out.as_bytes())
}

/// Write precision-recall sweeps, one row per frame and threshold, plus mean
/// rows across frames.
pub fn write_pr_csv(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut out = String::from("frame,threshold,precision,recall\n");
    let n_thresh = records.first().map(|r| r.pr.len()).unwrap_or(0);
    for (t, r) in records.iter().enumerate() {
        for (k, &(p, rec)) in r.pr.iter().enumerate() {
            let thresh = k as f64 / (r.pr.len() - 1).max(1) as f64;
            out.push_str(&format!("{},{:?},{:?},{:?}\n", t + 1, thresh, p, rec));
        }
    }
    if !records.is_empty() {
        for k in 0..n_thresh {
            let thresh = k as f64 / (n_thresh - 1).max(1) as f64;
            let mp = records.iter().map(|r| r.pr[k].0).sum::<f64>() / records.len() as f64;
            let mr = records.iter().map(|r| r.pr[k].1).sum::<f64>() / records.len() as f64;
            out.push_str(&format!("mean,{thresh:?},{mp:?},{mr:?}\n"));
        }
    }
    store(path, out.as_bytes())
}

/// Numbered artifact path inside a directory, e.g. `frame_0007.pgm`.
pub fn numbered(dir: &Path, stem: &str, index1: usize, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_{index1:04}.{ext}"))
}
