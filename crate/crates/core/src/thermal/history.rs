use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::grid::{pack_bits, unpack_bits};

const HISTORY_MAGIC: &[u8; 8] = b"THIST01\0";

/// Stored temperatures and activation flags at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub temperature: Vec<f32>,
    pub active: Vec<bool>,
}

/// Snapshots taken immediately before each activation, plus a final one.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureHistory {
    element_count: usize,
    snapshots: Vec<Snapshot>,
}

impl TemperatureHistory {
    pub fn new(element_count: usize, snapshots: Vec<Snapshot>) -> Self {
        Self {
            element_count,
            snapshots,
        }
    }

    pub fn element_count(&self) -> usize {
        self.element_count
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// Number of activation events the history covers.
    pub fn event_count(&self) -> usize {
        self.snapshots.len().saturating_sub(1)
    }

    pub fn max_temperature(&self) -> f32 {
        self.snapshots
            .iter()
            .flat_map(|s| s.temperature.iter().copied())
            .fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(HISTORY_MAGIC)?;
        w.write_u32::<LittleEndian>(self.element_count as u32)?;
        w.write_u32::<LittleEndian>(self.snapshots.len() as u32)?;
        for s in &self.snapshots {
            w.write_f64::<LittleEndian>(s.time)?;
            for &t in &s.temperature {
                w.write_f32::<LittleEndian>(t)?;
            }
            w.write_all(&pack_bits(&s.active))?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let truncated = |what: &str| Error::Format(format!("history file truncated in {what}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
        if &magic != HISTORY_MAGIC {
            return Err(Error::Format("bad history file magic".into()));
        }
        let n = r.read_u32::<LittleEndian>().map_err(|_| truncated("header"))? as usize;
        let count = r.read_u32::<LittleEndian>().map_err(|_| truncated("header"))? as usize;
        let mut snapshots = Vec::with_capacity(count);
        let mut bits = vec![0u8; n.div_ceil(8)];
        for _ in 0..count {
            let time = r.read_f64::<LittleEndian>().map_err(|_| truncated("snapshot"))?;
            let mut temperature = vec![0f32; n];
            r.read_f32_into::<LittleEndian>(&mut temperature)
                .map_err(|_| truncated("snapshot"))?;
            r.read_exact(&mut bits).map_err(|_| truncated("snapshot"))?;
            snapshots.push(Snapshot {
                time,
                temperature,
                active: unpack_bits(&bits, n),
            });
        }
        Ok(Self::new(n, snapshots))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let h = TemperatureHistory::new(
            3,
            vec![
                Snapshot {
                    time: 0.0,
                    temperature: vec![25.0, 25.0, 25.0],
                    active: vec![true, false, false],
                },
                Snapshot {
                    time: 0.4,
                    temperature: vec![30.5, 1600.25, 25.0],
                    active: vec![true, true, false],
                },
            ],
        );
        let mut buf = Vec::new();
        h.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 2 * (8 + 12 + 1));
        assert_eq!(TemperatureHistory::read_from(&buf[..]).unwrap(), h);
        assert!(TemperatureHistory::read_from(&buf[..buf.len() - 1]).is_err());
        buf[3] = 0;
        assert!(matches!(TemperatureHistory::read_from(&buf[..]), Err(Error::Format(_))));
    }
}
