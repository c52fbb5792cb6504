//! Two-channel time-tag streams and their on-disk formats.
//!
//! Channel 1 carries the laser trigger, channel 2 the detector clicks. The
//! stream keeps each channel as its own sorted vector of picosecond
//! timestamps; [`TimeTagStream::records`] merges them into time order, ties
//! going to the trigger.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic    8 bytes  b"SPADTTAG"
//! version  u16
//! hlen     u32      length of the JSON header that follows
//! header   hlen bytes of UTF-8 JSON (`StreamHeader`)
//! records  repeated { channel: u8, timestamp_ps: i64 }
//! ```
//!
//! The CSV alternative is a `channel,timestamp_ps` table without metadata.

use std::io::{self, BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPADTTAG";
pub const FORMAT_VERSION: u16 = 1;
pub const CSV_HEADER: &str = "channel,timestamp_ps";

const RECORD_LEN: usize = 9;

pub const PS_PER_S: f64 = 1e12;

pub fn seconds_to_ps(seconds: f64) -> i64 {
    (seconds * PS_PER_S).round() as i64
}

pub fn ps_to_seconds(ps: i64) -> f64 {
    ps as f64 / PS_PER_S
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    Trigger = 1,
    Click = 2,
}

impl Channel {
    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Channel> {
        match n {
            1 => Some(Channel::Trigger),
            2 => Some(Channel::Click),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTag {
    pub timestamp_ps: i64,
    pub channel: Channel,
}

/// Self-describing metadata stored in front of the binary records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    /// Nominal start of the acquisition, ps.
    pub start_ps: i64,
    /// Acquisition length, ps. `None` when unknown (e.g. read from CSV).
    pub duration_ps: Option<i64>,
    pub rng_seed: Option<u64>,
    pub rng_algorithm: Option<String>,
    /// Snapshot of whatever configuration produced the stream.
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeTagStream {
    pub header: StreamHeader,
    triggers: Vec<i64>,
    clicks: Vec<i64>,
}

impl TimeTagStream {
    /// Build from per-channel timestamp vectors; each must be non-decreasing.
    pub fn from_channels(header: StreamHeader, triggers: Vec<i64>, clicks: Vec<i64>) -> Result<Self> {
        check_sorted(&triggers, Channel::Trigger)?;
        check_sorted(&clicks, Channel::Click)?;
        Ok(TimeTagStream {
            header,
            triggers,
            clicks,
        })
    }

    /// Build from records in any global order, as long as each channel is
    /// individually non-decreasing.
    pub fn from_records(header: StreamHeader, records: impl IntoIterator<Item = TimeTag>) -> Result<Self> {
        let mut triggers = Vec::new();
        let mut clicks = Vec::new();
        for tag in records {
            match tag.channel {
                Channel::Trigger => triggers.push(tag.timestamp_ps),
                Channel::Click => clicks.push(tag.timestamp_ps),
            }
        }
        Self::from_channels(header, triggers, clicks)
    }

    pub fn triggers(&self) -> &[i64] {
        &self.triggers
    }

    pub fn clicks(&self) -> &[i64] {
        &self.clicks
    }

    pub fn len(&self) -> usize {
        self.triggers.len() + self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Click-only stream sharing this header.
    pub(crate) fn click_only(&self, clicks: Vec<i64>) -> TimeTagStream {
        TimeTagStream {
            header: self.header.clone(),
            triggers: Vec::new(),
            clicks,
        }
    }

    pub(crate) fn with_triggers(&self, triggers: Vec<i64>) -> TimeTagStream {
        TimeTagStream {
            header: self.header.clone(),
            triggers,
            clicks: self.clicks.clone(),
        }
    }

    /// Acquisition length: the header value, or the span up to the last tag.
    pub fn duration_ps(&self) -> i64 {
        self.header.duration_ps.unwrap_or_else(|| {
            let last = self.triggers.last().copied().max(self.clicks.last().copied());
            last.map_or(0, |t| t - self.header.start_ps + 1)
        })
    }

    /// All records in time order; a trigger sorts before a click at the same
    /// picosecond.
    pub fn records(&self) -> Records<'_> {
        Records {
            triggers: &self.triggers,
            clicks: &self.clicks,
        }
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        let hlen = u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&hlen.to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = [0u8; RECORD_LEN];
        for tag in self.records() {
            buf[0] = tag.channel.number();
            buf[1..].copy_from_slice(&tag.timestamp_ps.to_le_bytes());
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_binary_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(22 + self.len() * RECORD_LEN);
        self.write_binary(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        read_exact_or(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let mut v = [0u8; 2];
        read_exact_or(&mut r, &mut v, "version")?;
        let version = u16::from_le_bytes(v);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut l = [0u8; 4];
        read_exact_or(&mut r, &mut l, "header length")?;
        let mut header = vec![0u8; u32::from_le_bytes(l) as usize];
        read_exact_or(&mut r, &mut header, "header")?;
        let header: StreamHeader = serde_json::from_slice(&header)?;

        let mut triggers = Vec::new();
        let mut clicks = Vec::new();
        let mut buf = [0u8; RECORD_LEN];
        let mut index = 0usize;
        loop {
            let n = read_full(&mut r, &mut buf)?;
            if n == 0 {
                break;
            }
            if n < RECORD_LEN {
                return Err(Error::Format(format!("truncated record {index}")));
            }
            let ts = i64::from_le_bytes(buf[1..].try_into().expect("8 bytes"));
            match Channel::from_number(buf[0]) {
                Some(Channel::Trigger) => triggers.push(ts),
                Some(Channel::Click) => clicks.push(ts),
                None => return Err(Error::UnknownChannel { channel: buf[0], index }),
            }
            index += 1;
        }
        Self::from_channels(header, triggers, clicks)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["channel", "timestamp_ps"])?;
        for tag in self.records() {
            wtr.write_record([tag.channel.number().to_string(), tag.timestamp_ps.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        for column in ["channel", "timestamp_ps"] {
            if !headers.iter().any(|h| h == column) {
                return Err(Error::MissingColumn { column: column.into() });
            }
        }
        let mut records = Vec::new();
        #[derive(Deserialize)]
        struct Row {
            channel: u8,
            timestamp_ps: i64,
        }
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::CsvRow {
                row: i + 2,
                message: e.to_string(),
            })?;
            let channel = Channel::from_number(row.channel).ok_or(Error::UnknownChannel {
                channel: row.channel,
                index: i,
            })?;
            records.push(TimeTag {
                timestamp_ps: row.timestamp_ps,
                channel,
            });
        }
        Self::from_records(StreamHeader::default(), records)
    }

    /// Read either format, sniffing the magic bytes.
    pub fn read_any<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let is_binary = r.fill_buf()?.starts_with(MAGIC);
        if is_binary {
            Self::read_binary(r)
        } else {
            Self::read_csv(r)
        }
    }
}

pub struct Records<'a> {
    triggers: &'a [i64],
    clicks: &'a [i64],
}

impl Iterator for Records<'_> {
    type Item = TimeTag;

    fn next(&mut self) -> Option<TimeTag> {
        let take_trigger = match (self.triggers.first(), self.clicks.first()) {
            (None, None) => return None,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(t), Some(c)) => t <= c,
        };
        if take_trigger {
            let (&ts, rest) = self.triggers.split_first()?;
            self.triggers = rest;
            Some(TimeTag {
                timestamp_ps: ts,
                channel: Channel::Trigger,
            })
        } else {
            let (&ts, rest) = self.clicks.split_first()?;
            self.clicks = rest;
            Some(TimeTag {
                timestamp_ps: ts,
                channel: Channel::Click,
            })
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.triggers.len() + self.clicks.len();
        (n, Some(n))
    }
}

impl ExactSizeIterator for Records<'_> {}

fn check_sorted(ts: &[i64], channel: Channel) -> Result<()> {
    match ts.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(Error::UnsortedChannel {
            channel: channel.number(),
            index: i + 1,
        }),
        None => Ok(()),
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}
