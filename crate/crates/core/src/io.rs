//! Trajectory dumps: columnar CSV, the `SHCT` binary format and
//! two-column plot-data files.
//!
//! Binary layout, little-endian throughout:
//! `b"SHCT"`, `u32` version, `u32` time nodes, `u32` cells, `f64` σ,
//! time nodes, cell centers, then `y` and `z` in time-major order.

use std::io::{self, BufWriter, Read, Write};

use thiserror::Error;

use crate::pde::{SpaceTime, Trajectory};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"SHCT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed dump: {0}")]
    Format(String),
}

/// Contents of a binary dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDump {
    pub sigma: f64,
    pub times: Vec<f64>,
    pub centers: Vec<f64>,
    pub y: SpaceTime<f64>,
    pub z: SpaceTime<f64>,
}

impl<S: Scalar> From<&Trajectory<S>> for TrajectoryDump {
    fn from(traj: &Trajectory<S>) -> Self {
        let conv = |f: &SpaceTime<S>| {
            let data = f.as_slice().iter().map(|v| v.to_f64_lossy()).collect();
            SpaceTime::from_vec(f.n_times(), f.n_cells(), data).expect("shape preserved")
        };
        Self {
            sigma: traj.sigma.to_f64_lossy(),
            times: traj.tgrid.nodes().into_iter().map(|t| t.to_f64_lossy()).collect(),
            centers: traj.grid.centers().iter().map(|x| x.to_f64_lossy()).collect(),
            y: conv(&traj.y),
            z: conv(&traj.z),
        }
    }
}

/// One row per `(t, x)` pair, 17 significant digits.
pub fn write_csv<S: Scalar>(traj: &Trajectory<S>, out: impl Write) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "t,x,y,z")?;
    let times = traj.tgrid.nodes();
    for (m, t) in times.iter().enumerate() {
        let (ys, zs) = (traj.y.slice(m), traj.z.slice(m));
        for ((x, y), z) in traj.grid.centers().iter().zip(ys).zip(zs) {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                t.to_f64_lossy(),
                x.to_f64_lossy(),
                y.to_f64_lossy(),
                z.to_f64_lossy()
            )?;
        }
    }
    w.flush()
}

pub fn write_binary<S: Scalar>(traj: &Trajectory<S>, out: impl Write) -> io::Result<()> {
    write_dump(&TrajectoryDump::from(traj), out)
}

pub fn write_dump(dump: &TrajectoryDump, out: impl Write) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    let dim = |n: usize| {
        u32::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))
    };
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dim(dump.times.len())?.to_le_bytes())?;
    w.write_all(&dim(dump.centers.len())?.to_le_bytes())?;
    w.write_all(&dump.sigma.to_le_bytes())?;
    let payload = dump
        .times
        .iter()
        .chain(&dump.centers)
        .chain(dump.y.as_slice())
        .chain(dump.z.as_slice());
    for v in payload {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_binary(mut input: impl Read) -> Result<TrajectoryDump, IoError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(IoError::Format("bad magic bytes".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(IoError::Format(format!("unsupported version {version}")));
    }
    let nt = cur.u32()? as usize;
    let n = cur.u32()? as usize;
    let sigma = cur.f64()?;
    let times = cur.f64s(nt)?;
    let centers = cur.f64s(n)?;
    let y = cur.f64s(nt * n)?;
    let z = cur.f64s(nt * n)?;
    if cur.pos != bytes.len() {
        return Err(IoError::Format("trailing bytes".into()));
    }
    let field = |d| SpaceTime::from_vec(nt, n, d).map_err(|e| IoError::Format(e.to_string()));
    Ok(TrajectoryDump {
        sigma,
        times,
        centers,
        y: field(y)?,
        z: field(z)?,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8], IoError> {
        let end = self
            .pos
            .checked_add(k)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| IoError::Format("truncated payload".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>, IoError> {
        let len = k
            .checked_mul(8)
            .ok_or_else(|| IoError::Format("dimensions overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Whitespace-separated `x y` pairs with a `#` header line.
pub fn write_plot_data(
    header: (&str, &str),
    points: impl IntoIterator<Item = (f64, f64)>,
    out: impl Write,
) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "# {} {}", header.0, header.1)?;
    for (x, y) in points {
        writeln!(w, "{x:.16e} {y:.16e}")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Grid1D, TimeGrid};
    use crate::pde::{solve_forward_linear, CoefficientField, ControlField};

    fn sample() -> Trajectory<f64> {
        let g = Grid1D::<f64>::new(7, (0.3, 0.7)).unwrap();
        let t = TimeGrid::new(0.5, 4).unwrap();
        let c = CoefficientField::constant(&t, 7, [1.0, 0.5, -0.5, 1.0]);
        let y0 = g.sample(|x| (3.0 * x).sin());
        let z0 = g.sample(|x| 1.0 / 3.0 + x);
        solve_forward_linear(&g, &t, 2.0, &c, &ControlField::zeros(&t, &g), &y0, &z0).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let traj = sample();
        let mut buf = Vec::new();
        write_binary(&traj, &mut buf).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        assert_eq!(buf.len(), 4 + 12 + 8 + 8 * (5 + 7 + 2 * 35));
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, TrajectoryDump::from(&traj));
        assert_eq!(back.y, traj.y);
    }

    #[test]
    fn binary_rejects_corruption() {
        let mut buf = Vec::new();
        write_binary(&sample(), &mut buf).unwrap();
        assert!(read_binary(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_binary(bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(read_binary(bad.as_slice()).is_err());
        buf.push(0);
        assert!(read_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_round_trips_values() {
        let traj = sample();
        let mut buf = Vec::new();
        write_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,y,z"));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 35);
        for (k, row) in rows.iter().enumerate() {
            let (m, i) = (k / 7, k % 7);
            assert_eq!(row[0], traj.tgrid.node(m));
            assert_eq!(row[1], traj.grid.centers()[i]);
            assert_eq!(row[2], traj.y.slice(m)[i]);
            assert_eq!(row[3], traj.z.slice(m)[i]);
        }
    }

    #[test]
    fn plot_data_is_two_columns() {
        let mut buf = Vec::new();
        write_plot_data(("sigma", "gap"), [(1.0, 0.5), (10.0, 0.05)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 2);
        assert!(data.iter().all(|l| l.split_whitespace().count() == 2));
    }
}
