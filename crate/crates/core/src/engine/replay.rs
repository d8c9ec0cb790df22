//! Binary dumps of event logs (format `SHLB1`) and the replay self-check.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        5 bytes  "SHLB1"
//! model name   u16 length + UTF-8
//! seed         u64
//! d            u32
//! L            u32      window radius
//! horizon      f64
//! time kind    u8       0 = continuous, 1 = discrete
//! key offset   d × i32
//! parameters   u32 length + UTF-8 JSON
//! streams      u64 count, then per stream:
//!   site       u32      window index
//!   channel    u8
//!   records    u64 count, then per record
//!              continuous: f64 time, u32 mark
//!              discrete:   u32 mark (one per step)
//! ```
//!
//! Streams are ordered by `(site, channel)`; only records up to the horizon
//! are written.

use std::path::Path;

use crate::engine::log::EventLog;
use crate::engine::trajectory::{run, Trajectory};
use crate::error::{Error, Result};
use crate::lattice::{Site, Window};
use crate::models::{min_config, ModelSpec, TimeKind};

pub const MAGIC: &[u8; 5] = b"SHLB1";

/// Serializes the log up to its horizon.
pub fn dump_log(log: &EventLog) -> Vec<u8> {
    dump_log_until(log, log.horizon())
}

/// Serializes the log up to `until ≤ horizon`, writing `until` as the
/// horizon. A dump of an extended log cut at the old horizon is
/// byte-identical to the dump of the original.
pub fn dump_log_until(log: &EventLog, until: f64) -> Vec<u8> {
    let until = until.min(log.horizon());
    let m = log.model();
    let w = log.window();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let name = m.name().as_bytes();
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&log.seed().to_le_bytes());
    out.extend_from_slice(&(w.dim() as u32).to_le_bytes());
    out.extend_from_slice(&w.radius().to_le_bytes());
    out.extend_from_slice(&until.to_le_bytes());
    let discrete = m.time_kind() == TimeKind::Discrete;
    out.push(discrete as u8);
    for &k in log.key_offset() {
        out.extend_from_slice(&k.to_le_bytes());
    }
    let params = serde_json::to_string(m.dynamics()).expect("dynamics serialize");
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    out.extend_from_slice(params.as_bytes());

    let channels = log.channels_per_site();
    let n = w.len();
    out.extend_from_slice(&((n * channels) as u64).to_le_bytes());
    if discrete {
        let steps = until.floor() as u64;
        for site in 0..n as u32 {
            for ch in 0..channels {
                out.extend_from_slice(&site.to_le_bytes());
                out.push(ch as u8);
                out.extend_from_slice(&steps.to_le_bytes());
                for step in 0..steps {
                    out.extend_from_slice(&log.uniform(step, site, ch).to_le_bytes());
                }
            }
        }
    } else {
        let mut buckets: Vec<Vec<(f64, u32)>> = vec![Vec::new(); n * channels];
        let layout = log.layout();
        for b in 0..log.n_blocks() {
            for c in 0..layout.n_chunks {
                for e in log.cell(b, c) {
                    if e.time <= until {
                        buckets[e.site as usize * channels + e.channel as usize].push((e.time, e.mark));
                    }
                }
            }
        }
        for (i, bucket) in buckets.iter().enumerate() {
            out.extend_from_slice(&((i / channels) as u32).to_le_bytes());
            out.push((i % channels) as u8);
            out.extend_from_slice(&(bucket.len() as u64).to_le_bytes());
            for &(t, mark) in bucket {
                out.extend_from_slice(&t.to_le_bytes());
                out.extend_from_slice(&mark.to_le_bytes());
            }
        }
    }
    out
}

pub fn write_dump(log: &EventLog, path: &Path) -> Result<()> {
    std::fs::write(path, dump_log(log))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamDump {
    pub site: u32,
    pub channel: u8,
    /// Empty for discrete logs.
    pub times: Vec<f64>,
    pub marks: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogDump {
    pub model: String,
    pub seed: u64,
    pub dim: u32,
    pub radius: u32,
    pub horizon: f64,
    pub discrete: bool,
    pub key_offset: Vec<i32>,
    pub params: String,
    pub streams: Vec<StreamDump>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("truncated dump: {what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn string(&mut self, n: usize, what: &str) -> Result<String> {
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }
}

pub fn parse_dump(bytes: &[u8]) -> Result<LogDump> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(5, "magic")? != MAGIC {
        return Err(Error::Format("bad magic: not an SHLB1 dump".into()));
    }
    let len = r.u16("model name length")? as usize;
    let model = r.string(len, "model name")?;
    let seed = r.u64("seed")?;
    let dim = r.u32("dimension")?;
    let radius = r.u32("radius")?;
    let horizon = r.f64("horizon")?;
    let discrete = match r.u8("time kind")? {
        0 => false,
        1 => true,
        k => return Err(Error::Format(format!("unknown time kind {k}"))),
    };
    let key_offset = (0..dim).map(|_| r.i32("key offset")).collect::<Result<Vec<_>>>()?;
    let plen = r.u32("parameter length")? as usize;
    let params = r.string(plen, "parameters")?;
    let count = r.u64("stream count")?;
    let mut streams = Vec::new();
    for i in 0..count {
        let what = format!("stream {i}");
        let site = r.u32(&what)?;
        let channel = r.u8(&what)?;
        let records = r.u64(&what)? as usize;
        let mut times = Vec::new();
        let mut marks = Vec::with_capacity(records.min(1 << 20));
        for _ in 0..records {
            if !discrete {
                times.push(r.f64(&what)?);
            }
            marks.push(r.u32(&what)?);
        }
        streams.push(StreamDump { site, channel, times, marks });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after the last stream", bytes.len() - r.pos)));
    }
    Ok(LogDump { model, seed, dim, radius, horizon, discrete, key_offset, params, streams })
}

pub fn read_dump(path: &Path) -> Result<LogDump> {
    parse_dump(&std::fs::read(path)?)
}

/// First difference between two dumps, described for a human; `None` if
/// they are identical.
pub fn compare_dumps(a: &[u8], b: &[u8]) -> Option<String> {
    if a == b {
        return None;
    }
    let (da, db) = match (parse_dump(a), parse_dump(b)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) => return Some(format!("first dump unreadable: {e}")),
        (_, Err(e)) => return Some(format!("second dump unreadable: {e}")),
    };
    macro_rules! field {
        ($f:ident) => {
            if da.$f != db.$f {
                return Some(format!("header field {}: {:?} vs {:?}", stringify!($f), da.$f, db.$f));
            }
        };
    }
    field!(model);
    field!(seed);
    field!(dim);
    field!(radius);
    field!(horizon);
    field!(discrete);
    field!(key_offset);
    field!(params);
    for (i, (sa, sb)) in da.streams.iter().zip(&db.streams).enumerate() {
        if (sa.site, sa.channel) != (sb.site, sb.channel) {
            return Some(format!("stream {i}: ids ({}, {}) vs ({}, {})", sa.site, sa.channel, sb.site, sb.channel));
        }
        let at = format!("stream {i} (site {}, channel {})", sa.site, sa.channel);
        for j in 0..sa.marks.len().max(sb.marks.len()) {
            let ea = (sa.times.get(j), sa.marks.get(j));
            let eb = (sb.times.get(j), sb.marks.get(j));
            if ea != eb {
                return Some(format!("{at}, event {j}: {ea:?} vs {eb:?}"));
            }
        }
    }
    if da.streams.len() != db.streams.len() {
        return Some(format!("stream count {} vs {}", da.streams.len(), db.streams.len()));
    }
    Some("dumps differ in encoding only".into())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ReplayCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ReplayReport {
    pub checks: Vec<ReplayCheck>,
}

impl ReplayReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn seed_run(m: &ModelSpec, log: &EventLog, t: f64) -> Result<Trajectory> {
    let w = log.window();
    run(m, log, &min_config(m, &Site::origin(w.dim()), w)?, 0.0, t)
}

/// Regenerates one log twice and runs one trajectory twice, asserting bit
/// equality; then checks that extending the horizon leaves the prefix of
/// the log and of the trajectory unchanged.
pub fn replay_check(m: &ModelSpec, window: &Window, horizon: f64, seed: u64) -> Result<ReplayReport> {
    let a = EventLog::new(m, window, horizon, seed)?;
    let b = EventLog::new(m, window, horizon, seed)?;
    let (da, db) = (dump_log(&a), dump_log(&b));
    let mut checks = Vec::new();
    let diff = compare_dumps(&da, &db);
    checks.push(ReplayCheck {
        name: "log regeneration",
        pass: diff.is_none(),
        detail: diff.unwrap_or_else(|| format!("{} bytes identical", da.len())),
    });
    let (ta, tb) = (seed_run(m, &a, horizon)?.dump(), seed_run(m, &b, horizon)?.dump());
    checks.push(ReplayCheck {
        name: "trajectory replay",
        pass: ta == tb,
        detail: first_line_difference(&ta, &tb).unwrap_or_else(|| format!("{} lines identical", ta.lines().count())),
    });
    let ext_h = if m.time_kind() == TimeKind::Discrete { 2.0 * horizon.floor() } else { 2.0 * horizon };
    let ext = a.extended(ext_h)?;
    let de = dump_log_until(&ext, horizon);
    let diff = compare_dumps(&da, &de);
    checks.push(ReplayCheck {
        name: "horizon-extension prefix (log)",
        pass: diff.is_none(),
        detail: diff.unwrap_or_else(|| "prefix identical".into()),
    });
    let te = seed_run(m, &ext, horizon)?.dump();
    checks.push(ReplayCheck {
        name: "horizon-extension prefix (trajectory)",
        pass: ta == te,
        detail: first_line_difference(&ta, &te).unwrap_or_else(|| "prefix identical".into()),
    });
    Ok(ReplayReport { checks })
}

fn first_line_difference(a: &str, b: &str) -> Option<String> {
    if a == b {
        return None;
    }
    for (i, (x, y)) in a.lines().zip(b.lines()).enumerate() {
        if x != y {
            return Some(format!("line {}: {x:?} vs {y:?}", i + 1));
        }
    }
    Some(format!("line counts {} vs {}", a.lines().count(), b.lines().count()))
}
