//! Named polytopes used by the tests, the verification suites and the CLI.
//!
//! | name         | variety              | polarization |
//! |--------------|----------------------|--------------|
//! | interval     | ℙ¹                   | O(1)         |
//! | sym_interval | ℙ¹                   | -K = O(2)    |
//! | square       | ℙ¹×ℙ¹                | O(1,1)       |
//! | simplex2     | ℙ²                   | O(1)         |
//! | blp2         | ℙ² blown up at a point | -K         |
//! | cube         | (ℙ¹)³                | -K           |

use num::BigInt;

use crate::exact::rat;
use crate::polytope::{Halfspace, Polytope};

pub const NAMES: [&str; 6] = ["interval", "sym_interval", "square", "simplex2", "blp2", "cube"];

fn build(rows: &[(&[i64], i64)]) -> Polytope {
    Polytope::from_halfspaces(
        rows.iter()
            .map(|(u, c)| Halfspace::new(u.iter().map(|&v| BigInt::from(v)).collect(), rat(*c)))
            .collect(),
    )
    .expect("fixture is a valid polytope")
}

pub fn by_name(name: &str) -> Option<Polytope> {
    Some(match name {
        "interval" => build(&[(&[1], 0), (&[-1], 1)]),
        "sym_interval" => build(&[(&[1], 1), (&[-1], 1)]),
        "square" => build(&[(&[1, 0], 0), (&[0, 1], 0), (&[-1, 0], 1), (&[0, -1], 1)]),
        "simplex2" => build(&[(&[1, 0], 0), (&[0, 1], 0), (&[-1, -1], 1)]),
        "blp2" => build(&[(&[1, 0], 1), (&[0, 1], 1), (&[-1, -1], 1), (&[1, 1], 1)]),
        "cube" => build(&[
            (&[1, 0, 0], 1),
            (&[0, 1, 0], 1),
            (&[0, 0, 1], 1),
            (&[-1, 0, 0], 1),
            (&[0, -1, 0], 1),
            (&[0, 0, -1], 1),
        ]),
        _ => return None,
    })
}

pub fn all() -> Vec<(&'static str, Polytope)> {
    NAMES.iter().map(|&n| (n, by_name(n).unwrap())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat_frac;

    #[test]
    fn fixture_anchors() {
        let blp2 = by_name("blp2").unwrap();
        assert_eq!(blp2.vertices().len(), 4);
        assert_eq!(blp2.volume(), rat(4));
        assert!(blp2.is_reflexive());
        assert_eq!(by_name("simplex2").unwrap().volume(), rat_frac(1, 2));
        assert_eq!(by_name("cube").unwrap().boundary_volume(), rat(24));
        assert!(by_name("nope").is_none());
        for (name, p) in all() {
            assert!(p.check_delzant(), "{name}");
        }
    }
}
