//! Plain-text readout files.
//!
//! ```text
//! # dt = 0.004
//! # z.gamma = 0.7692307692307692
//! # z.eta = 0.54
//! # x.gamma = 0.7692307692307692
//! # x.eta = 0.41
//! # x.axis_angle = 1.5707963267948966
//! trace,t,r_z,r_x
//! 0,0,0.31,-1.2
//! ...
//! ```
//!
//! The `trace` column is optional; without it the file holds one record.
//! Rows of one trace must be contiguous and sit on the `dt` grid starting at
//! `t = 0`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sde::ReadoutRecord;
use crate::state::ChannelConfig;

/// Channel parameters stored in the `# key = value` preamble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutHeader {
    pub dt: f64,
    pub z_channel: ChannelConfig,
    pub x_channel: ChannelConfig,
}

pub fn write_readouts<W: Write>(mut w: W, header: &ReadoutHeader, records: &[ReadoutRecord]) -> std::io::Result<()> {
    writeln!(w, "# dt = {:?}", header.dt)?;
    for (name, ch) in [("z", &header.z_channel), ("x", &header.x_channel)] {
        writeln!(w, "# {name}.gamma = {:?}", ch.gamma)?;
        writeln!(w, "# {name}.eta = {:?}", ch.eta)?;
        writeln!(w, "# {name}.axis_angle = {:?}", ch.axis_angle)?;
    }
    writeln!(w, "trace,t,r_z,r_x")?;
    for (i, rec) in records.iter().enumerate() {
        for k in 0..rec.len() {
            writeln!(w, "{i},{:?},{:?},{:?}", rec.times[k], rec.r_z[k], rec.r_phi[k])?;
        }
    }
    w.flush()
}

pub fn write_readout_file(path: impl AsRef<Path>, header: &ReadoutHeader, records: &[ReadoutRecord]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_readouts(BufWriter::new(f), header, records).map_err(|e| Error::io(path, e))
}

pub fn read_readout_file(path: impl AsRef<Path>) -> Result<(ReadoutHeader, Vec<ReadoutRecord>)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_readouts(BufReader::new(f), &path.display().to_string())
}

/// Parses a readout file; `origin` names the source in error messages.
pub fn read_readouts<R: Read>(r: R, origin: &str) -> Result<(ReadoutHeader, Vec<ReadoutRecord>)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut reader = BufReader::new(r);
    let mut preamble = Preamble::default();
    let mut line_no = 0;
    let mut buf = String::new();
    // preamble lines, up to and including the column header
    let columns = loop {
        buf.clear();
        let n = reader
            .read_line(&mut buf)
            .map_err(|e| parse_err(line_no + 1, e.to_string()))?;
        if n == 0 {
            return Err(parse_err(line_no, "missing column header".into()));
        }
        line_no += 1;
        let line = buf.trim();
        if line.is_empty() {
            continue;
        }
        match line.strip_prefix('#') {
            Some(rest) => preamble.entry(rest).map_err(|m| parse_err(line_no, m))?,
            None => break line.split(',').map(|c| c.trim().to_string()).collect::<Vec<_>>(),
        }
    };
    let header_line = line_no;
    let header = preamble.finish().map_err(|m| parse_err(header_line, m))?;
    let with_trace = match columns.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["trace", "t", "r_z", "r_x"] => true,
        ["t", "r_z", "r_x"] => false,
        _ => {
            return Err(parse_err(
                header_line,
                format!("expected columns `[trace,]t,r_z,r_x`, got `{}`", columns.join(",")),
            ))
        }
    };

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut records: Vec<ReadoutRecord> = Vec::new();
    let mut current: Option<u64> = None;
    for row in csv.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(header_line, |p| header_line + p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = header_line + row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<f64> {
            let s = &row[i];
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("`{s}` is not a finite number")))
        };
        let offset = with_trace as usize;
        if row.len() != 3 + offset {
            return Err(parse_err(line, format!("expected {} fields, found {}", 3 + offset, row.len())));
        }
        let trace = if with_trace {
            row[0]
                .parse::<u64>()
                .map_err(|_| parse_err(line, format!("`{}` is not a trace index", &row[0])))?
        } else {
            0
        };
        if current != Some(trace) {
            if current.is_some_and(|c| trace != c + 1) {
                return Err(parse_err(line, format!("trace {trace} does not follow trace {}", current.unwrap())));
            }
            if current.is_none() && trace != 0 {
                return Err(parse_err(line, "first trace must be 0".into()));
            }
            current = Some(trace);
            records.push(ReadoutRecord::empty());
        }
        let rec = records.last_mut().expect("pushed above");
        let t = field(offset)?;
        let expected = rec.len() as f64 * header.dt;
        if (t - expected).abs() > 1e-3 * header.dt {
            return Err(parse_err(line, format!("t = {t} is off the grid; expected {expected}")));
        }
        rec.times.push(t);
        rec.r_z.push(field(offset + 1)?);
        rec.r_phi.push(field(offset + 2)?);
    }
    Ok((header, records))
}

#[derive(Default)]
struct Preamble {
    dt: Option<f64>,
    // gamma, eta, axis_angle per channel
    z: [Option<f64>; 3],
    x: [Option<f64>; 3],
}

impl Preamble {
    fn entry(&mut self, text: &str) -> std::result::Result<(), String> {
        let Some((key, value)) = text.split_once('=') else {
            // free-form comment
            return Ok(());
        };
        let (key, value) = (key.trim(), value.trim());
        let v: f64 = value
            .parse()
            .map_err(|_| format!("value `{value}` of `{key}` is not a number"))?;
        let slot = match key {
            "dt" => &mut self.dt,
            "z.gamma" => &mut self.z[0],
            "z.eta" => &mut self.z[1],
            "z.axis_angle" => &mut self.z[2],
            "x.gamma" => &mut self.x[0],
            "x.eta" => &mut self.x[1],
            "x.axis_angle" => &mut self.x[2],
            _ => return Err(format!("unknown header key `{key}`")),
        };
        if slot.replace(v).is_some() {
            return Err(format!("duplicate header key `{key}`"));
        }
        Ok(())
    }

    fn finish(self) -> std::result::Result<ReadoutHeader, String> {
        let dt = self.dt.ok_or("missing header key `dt`")?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(format!("dt must be > 0, got {dt}"));
        }
        let channel = |name: &str, p: [Option<f64>; 3], default_axis: f64| {
            let gamma = p[0].ok_or(format!("missing header key `{name}.gamma`"))?;
            let eta = p[1].ok_or(format!("missing header key `{name}.eta`"))?;
            ChannelConfig::new(p[2].unwrap_or(default_axis), gamma, eta).map_err(|e| e.to_string())
        };
        Ok(ReadoutHeader {
            dt,
            z_channel: channel("z", self.z, 0.0)?,
            x_channel: channel("x", self.x, std::f64::consts::FRAC_PI_2)?,
        })
    }
}
