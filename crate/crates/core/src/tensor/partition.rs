//! Partitions of finite axis sets with the coarsening order.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Partition of a finite set of 1-based axis labels into disjoint nonempty
/// blocks. Stored canonically: each block sorted ascending, blocks ordered by
/// their least element. The empty partition (no blocks, empty ground) is the
/// unique partition of the empty set; its degree is zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    ground: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut canon: Vec<Vec<usize>> = Vec::with_capacity(blocks.len());
        for mut block in blocks {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            block.sort_unstable();
            block.dedup();
            canon.push(block);
        }
        canon.sort_by_key(|b| b[0]);
        let mut ground: Vec<usize> = canon.iter().flatten().copied().collect();
        let total: usize = canon.iter().map(Vec::len).sum();
        ground.sort_unstable();
        ground.dedup();
        if ground.len() != total {
            return Err(Error::InvalidPartition(
                "blocks not disjoint".into(),
            ));
        }
        if ground.first() == Some(&0) {
            return Err(Error::InvalidPartition(
                "axis labels are 1-based".into(),
            ));
        }
        Ok(Self {
            ground,
            blocks: canon,
        })
    }

    /// The unique partition of the empty set.
    pub fn empty() -> Self {
        Self {
            ground: Vec::new(),
            blocks: Vec::new(),
        }
    }

    /// One singleton block per element.
    pub fn singletons(ground: &[usize]) -> Result<Self> {
        Self::new(ground.iter().map(|&x| vec![x]).collect())
    }

    /// A single block holding the whole ground set.
    pub fn one_block(ground: &[usize]) -> Result<Self> {
        if ground.is_empty() {
            return Ok(Self::empty());
        }
        Self::new(vec![ground.to_vec()])
    }

    pub fn ground(&self) -> &[usize] {
        &self.ground
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of blocks.
    pub fn degree(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// True when every block of `self` is contained in some block of
    /// `other`, i.e. `self` refines `other` and `other` is the coarser
    /// partition with the larger norm. Errors if the grounds differ.
    pub fn coarsens_to(&self, other: &Partition) -> Result<bool> {
        if self.ground != other.ground {
            return Err(Error::Mismatch(format!(
                "partitions of different grounds: {self} vs {other}"
            )));
        }
        Ok(self.blocks.iter().all(|block| {
            other
                .blocks
                .iter()
                .any(|sup| block.iter().all(|x| sup.contains(x)))
        }))
    }

    /// Canonical text form, `{1,3}|{2}`; the empty partition renders as `∅`.
    /// Doubles as the tie-break key for dominant-term selection.
    pub fn encode(&self) -> String {
        self.to_string()
    }

    /// Parses the canonical text form. Accepts whitespace around tokens.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed == "∅" {
            return Ok(Self::empty());
        }
        let mut blocks = Vec::new();
        for part in trimmed.split('|') {
            let part = part.trim();
            let inner = part
                .strip_prefix('{')
                .and_then(|p| p.strip_suffix('}'))
                .ok_or_else(|| {
                    Error::Parse(format!(
                        "block `{part}` is not brace-delimited"
                    ))
                })?;
            let mut block = Vec::new();
            for token in inner.split(',') {
                let token = token.trim();
                if token.is_empty() {
                    return Err(Error::Parse(format!(
                        "empty element in block `{part}`"
                    )));
                }
                let axis: usize = token.parse().map_err(|_| {
                    Error::Parse(format!("`{token}` is not an axis label"))
                })?;
                block.push(axis);
            }
            blocks.push(block);
        }
        Self::new(blocks)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.blocks.is_empty() {
            return write!(f, "∅");
        }
        let rendered: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                let inner: Vec<String> =
                    b.iter().map(usize::to_string).collect();
                format!("{{{}}}", inner.join(","))
            })
            .collect();
        write!(f, "{}", rendered.join("|"))
    }
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.encode())
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Partition::parse(&text).map_err(D::Error::custom)
    }
}

/// All partitions of `ground`, in a fixed deterministic order: depth-first
/// placement of each element (ascending) into existing blocks in order, then
/// into a fresh block. The empty ground yields exactly the empty partition.
/// Counts follow the Bell numbers: 1, 1, 2, 5, 15, 52, ...
pub fn enumerate_partitions(ground: &[usize]) -> Result<Vec<Partition>> {
    let mut sorted = ground.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != ground.len() {
        return Err(Error::InvalidPartition(
            "ground set has repeated elements".into(),
        ));
    }
    if sorted.is_empty() {
        return Ok(vec![Partition::empty()]);
    }
    let mut out = Vec::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    place(&sorted, 0, &mut blocks, &mut out)?;
    Ok(out)
}

fn place(
    elems: &[usize],
    pos: usize,
    blocks: &mut Vec<Vec<usize>>,
    out: &mut Vec<Partition>,
) -> Result<()> {
    if pos == elems.len() {
        out.push(Partition::new(blocks.clone())?);
        return Ok(());
    }
    for k in 0..blocks.len() {
        blocks[k].push(elems[pos]);
        place(elems, pos + 1, blocks, out)?;
        blocks[k].pop();
    }
    blocks.push(vec![elems[pos]]);
    place(elems, pos + 1, blocks, out)?;
    blocks.pop();
    Ok(())
}
