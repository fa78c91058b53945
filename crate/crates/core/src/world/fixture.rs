//! Versioned text serialization of a built world, for cross-implementation fixtures.
//!
//! The file is JSON with a header (`format`, `version`), the generating spec
//! (which carries `θ*₊` and the seed), and every feature vector. Floats are
//! written in shortest round-trip form so import reproduces the world bit for bit.

use serde::{Deserialize, Serialize};

use super::{World, WorldError, WorldSpec};
use crate::mathcore::Vector;

pub const WORLD_FORMAT: &str = "depo-world";
pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    format: String,
    version: u32,
    spec: WorldSpec,
    reward_shift: f64,
    /// Row-major over (prompt, response).
    features: Vec<Vec<f64>>,
}

impl World {
    pub fn to_fixture_string(&self) -> String {
        let file = WorldFile {
            format: WORLD_FORMAT.to_string(),
            version: WORLD_FORMAT_VERSION,
            spec: self.spec.clone(),
            reward_shift: self.reward_shift,
            features: self.features.iter().map(|v| v.as_slice().to_vec()).collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("world serializes");
        text.push('\n');
        text
    }

    pub fn from_fixture_str(text: &str) -> Result<Self, WorldError> {
        let header: Header =
            serde_json::from_str(text).map_err(|e| WorldError::Malformed(e.to_string()))?;
        if header.format != WORLD_FORMAT || header.version != WORLD_FORMAT_VERSION {
            return Err(WorldError::VersionMismatch {
                expected: WORLD_FORMAT.to_string(),
                expected_version: WORLD_FORMAT_VERSION,
                found: header.format,
                found_version: header.version,
            });
        }
        let file: WorldFile =
            serde_json::from_str(text).map_err(|e| WorldError::Malformed(e.to_string()))?;
        let features = file
            .features
            .into_iter()
            .map(Vector::new)
            .collect::<Result<Vec<_>, _>>()?;
        let world = World::from_parts(file.spec, features)?;
        if world.reward_shift.to_bits() != file.reward_shift.to_bits() {
            return Err(WorldError::Malformed(
                "stored reward shift disagrees with the features".into(),
            ));
        }
        Ok(world)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::FeatureGenerator;

    fn world() -> World {
        let mut spec = WorldSpec::random(5, 3, 3, 2.5, FeatureGenerator::Clustered, 77);
        spec.prompt_weights = vec![0.1, 0.2, 0.3, 0.15, 0.25];
        World::build(spec).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let w = world();
        let back = World::from_fixture_str(&w.to_fixture_string()).unwrap();
        assert_eq!(back, w);
        for x in 0..5 {
            for y in 0..3 {
                for y2 in 0..3 {
                    assert_eq!(
                        back.true_gap(x, y, y2).unwrap().to_bits(),
                        w.true_gap(x, y, y2).unwrap().to_bits()
                    );
                }
            }
        }
    }

    #[test]
    fn export_is_deterministic() {
        assert_eq!(world().to_fixture_string(), world().to_fixture_string());
    }

    #[test]
    fn version_mismatch_is_named() {
        let text = world()
            .to_fixture_string()
            .replace("\"version\": 1", "\"version\": 99");
        match World::from_fixture_str(&text) {
            Err(WorldError::VersionMismatch { found_version, .. }) => assert_eq!(found_version, 99),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(
            World::from_fixture_str("not json"),
            Err(WorldError::Malformed(_))
        ));
    }
}
