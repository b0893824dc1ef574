//! Little-endian binary trajectory and checkpoint files.
//!
//! ```text
//! magic  "HSYM"           4 bytes
//! version                 u16
//! n_shells                u32
//! record count            u64
//! stride_dt               f64
//! Re                      f64
//! f0 re, im               f64 × 2
//! f1 re, im               f64 × 2
//! seed                    u64
//! frames: t f64, then (re, im) f64 pairs × n_shells
//! ```
//!
//! A checkpoint is the same header with a record count of one, one frame, then the
//! integrator clock `{step u64, dt f64}`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::integrator::{Clock, Frame, RunInfo, Trajectory};
use crate::scalar::{Cx, Real};
use crate::shell::{ShellField, ShellState};

pub const MAGIC: &[u8; 4] = b"HSYM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8 + 8 * 6 + 8;

fn write_header(w: &mut impl Write, info: &RunInfo, count: u64) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(info.n_shells as u32).to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    for x in [
        info.stride_dt,
        info.reynolds,
        info.f0.re,
        info.f0.im,
        info.f1.re,
        info.f1.im,
    ] {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&info.seed.to_le_bytes())
}

fn write_frame<T: Real>(w: &mut impl Write, t: T, u: &[Cx<T>]) -> std::io::Result<()> {
    w.write_all(&t.as_f64().to_le_bytes())?;
    for z in u {
        w.write_all(&z.re.as_f64().to_le_bytes())?;
        w.write_all(&z.im.as_f64().to_le_bytes())?;
    }
    Ok(())
}

/// Byte cursor over a fully read file.
struct Reader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("truncated file: need {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn header(&mut self) -> Result<(RunInfo, u64)> {
        let magic = self.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("version mismatch: bad magic bytes {magic:?}"),
            });
        }
        let version = self.u16()?;
        if version != VERSION {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("version mismatch: file has version {version}, reader supports {VERSION}"),
            });
        }
        let n_shells = self.u32()? as usize;
        let count = self.u64()?;
        let stride_dt = self.f64()?;
        let reynolds = self.f64()?;
        let f0 = Cx::new(self.f64()?, self.f64()?);
        let f1 = Cx::new(self.f64()?, self.f64()?);
        let seed = self.u64()?;
        Ok((
            RunInfo {
                n_shells,
                stride_dt,
                reynolds,
                f0,
                f1,
                seed,
            },
            count,
        ))
    }

    fn frame<T: Real>(&mut self, n: usize) -> Result<Frame<T>> {
        let t = T::lit(self.f64()?);
        let mut u = Vec::with_capacity(n);
        for _ in 0..n {
            let re = self.f64()?;
            let im = self.f64()?;
            u.push(Cx::new(T::lit(re), T::lit(im)));
        }
        Ok(Frame { t, u })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_trajectory<T: Real>(path: &Path, traj: &Trajectory<T>) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write_header(&mut w, &traj.info, traj.frames.len() as u64).map_err(io)?;
    for f in &traj.frames {
        write_frame(&mut w, f.t, &f.u).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_trajectory<T: Real>(path: &Path) -> Result<Trajectory<T>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        path,
        buf: &buf,
        pos: 0,
    };
    let (info, count) = r.header()?;
    let frame_len = 8 * (1 + 2 * info.n_shells);
    let expected = HEADER_LEN as u64 + count * frame_len as u64;
    if expected != buf.len() as u64 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("header promises {count} frames ({expected} bytes), file has {} bytes", buf.len()),
        });
    }
    let frames = (0..count)
        .map(|_| r.frame(info.n_shells))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { info, frames })
}

pub fn write_checkpoint<T: Real>(path: &Path, info: &RunInfo, state: &ShellState<T>, clock: &Clock) -> Result<()> {
    if state.n_min() != 0 || state.amplitudes().len() != info.n_shells {
        return Err(Error::Structural(format!(
            "checkpoint expects shells 0..{}, state window is [{}, {}]",
            info.n_shells,
            state.n_min(),
            state.n_max()
        )));
    }
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write_header(&mut w, info, 1).map_err(io)?;
    write_frame(&mut w, state.t, state.amplitudes()).map_err(io)?;
    w.write_all(&clock.step.to_le_bytes()).map_err(io)?;
    w.write_all(&clock.dt.to_le_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_checkpoint<T: Real>(path: &Path) -> Result<(ShellState<T>, Clock, RunInfo)> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        path,
        buf: &buf,
        pos: 0,
    };
    let (info, count) = r.header()?;
    if count != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("checkpoint must hold one frame, header says {count}"),
        });
    }
    let frame: Frame<T> = r.frame(info.n_shells)?;
    let clock = Clock {
        step: r.u64()?,
        dt: r.f64()?,
    };
    if r.pos != buf.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "trailing bytes after checkpoint clock".into(),
        });
    }
    let state = ShellState::from_parts(frame.t, ShellField::new(0, frame.u), false);
    Ok((state, clock, info))
}
