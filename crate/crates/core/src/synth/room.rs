//! Shoebox room geometry, source/microphone placement and Sabine absorption.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

pub const T60_MIN: f64 = 0.1;
pub const T60_MAX: f64 = 1.0;
const WALL_MARGIN: f64 = 0.5;
const MIN_SOURCE_DISTANCE: f64 = 0.75;
pub const TEST_CATALOG_SIZE: usize = 20;
const TEST_CATALOG_SEED: u64 = 0x7e57_7e57_0000_0001;
/// Train room ids start here; test rooms use `0..TEST_CATALOG_SIZE`.
pub const TRAIN_ROOM_ID_BASE: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?} (train|test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomConfig {
    pub dims: [f64; 3],
    pub t60: f64,
    pub speech_pos: Point,
    pub noise_pos: Point,
    pub mic_l: Point,
    pub mic_r: Point,
    pub room_id: u64,
    pub split: Split,
}

impl RoomConfig {
    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.iter().zip(&self.dims).all(|(x, d)| *x > 0.0 && x < d)
    }

    pub fn mic_separation(&self) -> f64 {
        distance(&self.mic_l, &self.mic_r)
    }

    pub fn absorption(&self) -> Result<f64> {
        t60_to_absorption(self.t60, self.dims)
    }

    /// Checks every invariant of a room description.
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config(format!("room dimensions {:?} must be positive", self.dims)));
        }
        for (name, p) in [
            ("speech source", &self.speech_pos),
            ("noise source", &self.noise_pos),
            ("left mic", &self.mic_l),
            ("right mic", &self.mic_r),
        ] {
            if !self.contains(p) {
                return Err(Error::OutsideRoom(format!("{name} at {p:?} in room {:?}", self.dims)));
            }
        }
        if !(T60_MIN..=T60_MAX).contains(&self.t60) {
            return Err(Error::Config(format!("t60 {} outside [{T60_MIN}, {T60_MAX}]", self.t60)));
        }
        let sep = self.mic_separation();
        if !(0.05..=0.3).contains(&sep) {
            return Err(Error::Config(format!("mic separation {sep:.3} m outside [0.05, 0.3]")));
        }
        Ok(())
    }
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sabine: `α = 0.161·V / (S·t60)`.
pub fn t60_to_absorption(t60: f64, dims: [f64; 3]) -> Result<f64> {
    if !(t60 > 0.0) {
        return Err(Error::Config(format!("t60 must be positive, got {t60}")));
    }
    let [l, w, h] = dims;
    let volume = l * w * h;
    let surface = 2.0 * (l * w + l * h + w * h);
    let alpha = 0.161 * volume / (surface * t60);
    if alpha >= 1.0 {
        return Err(Error::RoomTooSmall { alpha });
    }
    Ok(alpha.max(f64::MIN_POSITIVE))
}

/// Smallest T60 for which the Sabine absorption stays below one.
pub fn min_t60(dims: [f64; 3]) -> f64 {
    let [l, w, h] = dims;
    0.161 * l * w * h / (2.0 * (l * w + l * h + w * h))
}

struct Ranges {
    dims: [(f64, f64); 3],
}

const TRAIN_RANGES: Ranges = Ranges {
    dims: [(3.0, 8.0), (3.0, 6.0), (2.4, 3.4)],
};
// Shifted upwards so that no test room can coincide with a training room.
const TEST_RANGES: Ranges = Ranges {
    dims: [(8.5, 10.0), (6.5, 8.0), (3.5, 4.2)],
};

fn random_point(rng: &mut ChaCha8Rng, dims: &[f64; 3], margin: f64) -> Point {
    std::array::from_fn(|i| rng.random_range(margin..dims[i] - margin))
}

fn draw_room(rng: &mut ChaCha8Rng, ranges: &Ranges, room_id: u64, split: Split) -> RoomConfig {
    let dims: [f64; 3] = std::array::from_fn(|i| rng.random_range(ranges.dims[i].0..ranges.dims[i].1));
    let t_lo = (min_t60(dims) * 1.05).max(T60_MIN);
    let t60 = rng.random_range(t_lo..T60_MAX);
    // mic pair: horizontal baseline around a centre kept clear of the walls
    let centre = random_point(rng, &dims, WALL_MARGIN + 0.15);
    let sep = rng.random_range(0.05..0.3);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (0.5 * sep * angle.cos(), 0.5 * sep * angle.sin());
    let mic_l = [centre[0] - dx, centre[1] - dy, centre[2]];
    let mic_r = [centre[0] + dx, centre[1] + dy, centre[2]];
    let place = |rng: &mut ChaCha8Rng| loop {
        let p = random_point(rng, &dims, WALL_MARGIN);
        if distance(&p, &centre) >= MIN_SOURCE_DISTANCE {
            return p;
        }
    };
    let speech_pos = place(rng);
    let noise_pos = place(rng);
    RoomConfig {
        dims,
        t60,
        speech_pos,
        noise_pos,
        mic_l,
        mic_r,
        room_id,
        split,
    }
}

/// Train: a fresh room drawn from `seed`. Test: catalog entry `seed mod 20`,
/// identical on every call.
pub fn sample_room(seed: u64, split: Split) -> RoomConfig {
    match split {
        Split::Train => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            draw_room(&mut rng, &TRAIN_RANGES, TRAIN_ROOM_ID_BASE + seed % 1_000_000_000, split)
        }
        Split::Test => test_room((seed % TEST_CATALOG_SIZE as u64) as usize),
    }
}

pub fn test_room(index: usize) -> RoomConfig {
    assert!(index < TEST_CATALOG_SIZE, "test catalog has {TEST_CATALOG_SIZE} rooms");
    let mut rng = ChaCha8Rng::seed_from_u64(TEST_CATALOG_SEED.wrapping_add(index as u64));
    draw_room(&mut rng, &TEST_RANGES, index as u64, Split::Test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sabine_reference_values() {
        // V = 60, S = 94
        let a = t60_to_absorption(0.5, [5.0, 4.0, 3.0]).unwrap();
        assert!((a - 0.161 * 60.0 / (94.0 * 0.5)).abs() < 1e-15);
        assert!((a - 0.205_531_914_893_617).abs() < 1e-12);
        let a = t60_to_absorption(0.05, [1.0, 1.0, 1.0]).unwrap();
        assert!((a - 0.536_666_666_666_666_7).abs() < 1e-12);
        assert!(t60_to_absorption(1e9, [5.0, 4.0, 3.0]).unwrap() < 1e-9);
        assert!(matches!(
            t60_to_absorption(0.01, [1.0, 1.0, 1.0]),
            Err(Error::RoomTooSmall { .. })
        ));
    }

    #[test]
    fn sampled_rooms_are_valid() {
        for seed in 0..300 {
            let r = sample_room(seed, Split::Train);
            r.validate().unwrap();
            assert!(r.absorption().unwrap() < 1.0);
        }
        for i in 0..TEST_CATALOG_SIZE {
            test_room(i).validate().unwrap();
        }
    }

    #[test]
    fn test_catalog_fixed_and_disjoint() {
        assert_eq!(sample_room(3, Split::Test), sample_room(23, Split::Test));
        assert_eq!(sample_room(3, Split::Test), test_room(3));
        for seed in 0..200 {
            let tr = sample_room(seed, Split::Train);
            assert!(tr.dims[0] < TEST_RANGES.dims[0].0);
        }
    }

    #[test]
    fn split_parsing() {
        assert_eq!("train".parse::<Split>().unwrap(), Split::Train);
        assert_eq!(Split::Test.to_string(), "test");
        assert!("dev".parse::<Split>().is_err());
    }
}
