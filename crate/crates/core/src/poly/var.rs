use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Structured variable identifier. All indices are zero-based.
///
/// The variant order fixes the total order between kinds, so two ids of
/// different kinds never compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarId {
    /// Coordinate `Y^v_i` of the global point space (vertex `v`, label `i`).
    Point { vertex: u32, index: u32 },
    /// Coordinate `Y_{ij}` of the block space, label `i` in block `j`.
    Block { index: u32, block: u32 },
    /// Orthogonal-transform variable `W_{ij}`; `index == 0` is the block mean.
    W { index: u32, block: u32 },
    /// Orthonormal mixture `U_t` of the block means; `U(0)` is the total mean.
    U(u32),
    /// Noisy block coordinate, distributed as an independent standard Gaussian.
    Z { index: u32, block: u32 },
    /// Free variable, written as a lowercase letter followed by an index.
    Abstract { name: char, index: u32 },
}

impl VarId {
    pub fn point(vertex: u32, index: u32) -> Self {
        VarId::Point { vertex, index }
    }
    pub fn block(index: u32, block: u32) -> Self {
        VarId::Block { index, block }
    }
    pub fn w(index: u32, block: u32) -> Self {
        VarId::W { index, block }
    }
    pub fn u(t: u32) -> Self {
        VarId::U(t)
    }
    pub fn z(index: u32, block: u32) -> Self {
        VarId::Z { index, block }
    }
    pub fn abstract_var(name: char, index: u32) -> Self {
        debug_assert!(name.is_ascii_lowercase());
        VarId::Abstract { name, index }
    }

    /// Block the variable belongs to, for the block-structured kinds.
    pub fn block_of(&self) -> Option<u32> {
        match *self {
            VarId::Block { block, .. } | VarId::W { block, .. } | VarId::Z { block, .. } => {
                Some(block)
            }
            _ => None,
        }
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VarId::Point { vertex, index } => write!(f, "Yv{vertex}_{index}"),
            VarId::Block { index, block } => write!(f, "Y{index}_{block}"),
            VarId::W { index, block } => write!(f, "W{index}_{block}"),
            VarId::U(t) => write!(f, "U{t}"),
            VarId::Z { index, block } => write!(f, "Z{index}_{block}"),
            VarId::Abstract { name, index } => write!(f, "{name}{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed variable token `{0}`")]
pub struct ParseVarError(pub String);

fn pair(s: &str) -> Option<(u32, u32)> {
    let (a, b) = s.split_once('_')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

impl FromStr for VarId {
    type Err = ParseVarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseVarError(s.to_string());
        let parsed = if let Some(rest) = s.strip_prefix("Yv") {
            pair(rest).map(|(vertex, index)| VarId::Point { vertex, index })
        } else if let Some(rest) = s.strip_prefix('Y') {
            pair(rest).map(|(index, block)| VarId::Block { index, block })
        } else if let Some(rest) = s.strip_prefix('W') {
            pair(rest).map(|(index, block)| VarId::W { index, block })
        } else if let Some(rest) = s.strip_prefix('Z') {
            pair(rest).map(|(index, block)| VarId::Z { index, block })
        } else if let Some(rest) = s.strip_prefix('U') {
            rest.parse().ok().map(VarId::U)
        } else {
            let mut chars = s.chars();
            match chars.next() {
                Some(name) if name.is_ascii_lowercase() => chars
                    .as_str()
                    .parse()
                    .ok()
                    .map(|index| VarId::Abstract { name, index }),
                _ => None,
            }
        };
        parsed.ok_or_else(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_round_trip() {
        let ids = [
            VarId::point(3, 2),
            VarId::block(0, 9),
            VarId::w(1, 4),
            VarId::u(7),
            VarId::z(5, 0),
            VarId::abstract_var('x', 0),
            VarId::abstract_var('f', 12),
        ];
        for id in ids {
            assert_eq!(id.to_string().parse::<VarId>().unwrap(), id);
        }
        assert!("Q1".parse::<VarId>().is_err());
        assert!("Y1".parse::<VarId>().is_err());
        assert!("Yv1_".parse::<VarId>().is_err());
    }

    #[test]
    fn kinds_are_totally_ordered_and_distinct() {
        let a = VarId::point(0, 0);
        let b = VarId::block(0, 0);
        let c = VarId::w(0, 0);
        assert!(a < b && b < c && c < VarId::u(0));
        assert_ne!(VarId::z(1, 1), VarId::block(1, 1));
    }
}
