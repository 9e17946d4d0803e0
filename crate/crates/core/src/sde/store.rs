//! Binary ensemble container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "QMEASENS"
//! version    u32      1
//! header_len u64      length of the JSON-encoded SimConfig that follows
//! header     bytes
//! count      u64
//! flags      u8       bit 0: readouts present
//! per member:
//!   stream_id u64
//!   points    u64     n
//!   times, x, y, z           n f64 each
//!   r_z, r_phi (if flagged)  n-1 f64 each
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Ensemble, ReadoutRecord, Trajectory};
use crate::error::{Error, Result};
use crate::state::{BlochState, SimConfig};

const MAGIC: &[u8; 8] = b"QMEASENS";
const VERSION: u32 = 1;

pub fn write_ensemble<W: Write>(mut w: W, ens: &Ensemble) -> std::io::Result<()> {
    let header = serde_json::to_vec(&ens.config).expect("SimConfig serializes");
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(ens.len() as u64).to_le_bytes())?;
    w.write_all(&[ens.readouts.is_some() as u8])?;
    for (i, tr) in ens.trajectories.iter().enumerate() {
        w.write_all(&ens.stream_ids[i].to_le_bytes())?;
        w.write_all(&(tr.len() as u64).to_le_bytes())?;
        write_f64s(&mut w, tr.times.iter().copied())?;
        write_f64s(&mut w, tr.states.iter().map(|q| q.x))?;
        write_f64s(&mut w, tr.states.iter().map(|q| q.y))?;
        write_f64s(&mut w, tr.states.iter().map(|q| q.z))?;
        if let Some(recs) = &ens.readouts {
            write_f64s(&mut w, recs[i].r_z.iter().copied())?;
            write_f64s(&mut w, recs[i].r_phi.iter().copied())?;
        }
    }
    w.flush()
}

fn write_f64s<W: Write>(w: &mut W, it: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for v in it {
        w.write_all(&v.to_bits().to_le_bytes())?;
    }
    Ok(())
}

pub fn write_ensemble_file(path: impl AsRef<Path>, ens: &Ensemble) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_ensemble(BufWriter::new(f), ens).map_err(|e| Error::io(path, e))
}

pub fn read_ensemble_file(path: impl AsRef<Path>) -> Result<Ensemble> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ensemble(BufReader::new(f))
}

struct Input<R> {
    r: R,
}

impl<R: Read> Input<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated input: {e}")))?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| Ok(f64::from_bits(self.u64()?))).collect()
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n < (1 << 40))
            .ok_or_else(|| Error::Format(format!("implausible {what} {n}")))
    }
}

pub fn read_ensemble<R: Read>(r: R) -> Result<Ensemble> {
    let mut inp = Input { r };
    if &inp.bytes::<8>()? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(inp.bytes()?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let hlen = inp.len("header length")?;
    let mut header = vec![0u8; hlen];
    inp.r
        .read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    let config: SimConfig =
        serde_json::from_slice(&header).map_err(|e| Error::Format(format!("header: {e}")))?;
    let count = inp.len("member count")?;
    let has_readouts = match inp.bytes::<1>()?[0] {
        0 => false,
        1 => true,
        f => return Err(Error::Format(format!("unknown flags {f:#x}"))),
    };
    let mut stream_ids = Vec::with_capacity(count);
    let mut trajectories = Vec::with_capacity(count);
    let mut readouts = Vec::new();
    for _ in 0..count {
        stream_ids.push(inp.u64()?);
        let n = inp.len("trajectory length")?;
        let times = inp.f64s(n)?;
        let (x, y, z) = (inp.f64s(n)?, inp.f64s(n)?, inp.f64s(n)?);
        let states = (0..n).map(|k| BlochState::new(x[k], y[k], z[k])).collect();
        if has_readouts {
            let m = n.saturating_sub(1);
            let (r_z, r_phi) = (inp.f64s(m)?, inp.f64s(m)?);
            readouts.push(ReadoutRecord {
                times: times[..m].to_vec(),
                r_z,
                r_phi,
            });
        }
        trajectories.push(Trajectory { times, states });
    }
    let mut trailing = [0u8; 1];
    if inp.r.read(&mut trailing).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after last member".into()));
    }
    Ok(Ensemble {
        config,
        stream_ids,
        trajectories,
        readouts: has_readouts.then_some(readouts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{run_ensemble, run_ensemble_with, Integrator};

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = SimConfig::ideal_xz(1.0, 0.01, 0.3, 0.123456789, 99).unwrap();
        for integrator in [Integrator::Cartesian, Integrator::Polar] {
            let ens = run_ensemble_with(&cfg, 4, integrator).unwrap();
            let mut buf = Vec::new();
            write_ensemble(&mut buf, &ens).unwrap();
            let back = read_ensemble(&buf[..]).unwrap();
            assert_eq!(back.config, ens.config);
            assert_eq!(back.stream_ids, ens.stream_ids);
            for (a, b) in back.trajectories.iter().zip(&ens.trajectories) {
                for (p, q) in a.states.iter().zip(&b.states) {
                    assert_eq!(p.x.to_bits(), q.x.to_bits());
                    assert_eq!(p.z.to_bits(), q.z.to_bits());
                }
            }
            assert_eq!(back, ens);
            let mut again = Vec::new();
            write_ensemble(&mut again, &back).unwrap();
            assert_eq!(again, buf);
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let cfg = SimConfig::ideal_xz(1.0, 0.01, 0.1, 0.5, 1).unwrap();
        let ens = run_ensemble(&cfg, 2).unwrap();
        let mut buf = Vec::new();
        write_ensemble(&mut buf, &ens).unwrap();
        assert!(read_ensemble(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_ensemble(&extra[..]).is_err());
        buf[0] = b'X';
        assert!(read_ensemble(&buf[..]).is_err());
    }
}
