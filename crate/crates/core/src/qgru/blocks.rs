use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_BLOCKS: usize = 17;
pub const MIN_GENE: u8 = 2;
pub const MAX_GENE: u8 = 8;

/// The quantized operators of one GRU cell, in genome order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockId {
    Wir,
    Wiz,
    Win,
    Whr,
    Whz,
    Whn,
    AddR,
    AddZ,
    AddN,
    SigR,
    SigZ,
    TanhN,
    /// `r ⊙ (W_hn h + b_hn)`
    MulR,
    /// `1 - z`
    ComplZ,
    /// `(1 - z) ⊙ n`
    MulNew,
    /// `z ⊙ h`
    MulOld,
    /// `h_t`
    AddH,
}

impl BlockId {
    pub const ALL: [BlockId; NUM_BLOCKS] = [
        BlockId::Wir,
        BlockId::Wiz,
        BlockId::Win,
        BlockId::Whr,
        BlockId::Whz,
        BlockId::Whn,
        BlockId::AddR,
        BlockId::AddZ,
        BlockId::AddN,
        BlockId::SigR,
        BlockId::SigZ,
        BlockId::TanhN,
        BlockId::MulR,
        BlockId::ComplZ,
        BlockId::MulNew,
        BlockId::MulOld,
        BlockId::AddH,
    ];

    /// The six dense layers, input-side first.
    pub const LINEAR: [BlockId; 6] =
        [BlockId::Wir, BlockId::Wiz, BlockId::Win, BlockId::Whr, BlockId::Whz, BlockId::Whn];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<BlockId> {
        Self::ALL.get(i).copied()
    }

    pub fn is_linear(self) -> bool {
        self.index() < 6
    }

    /// Whether the dense layer consumes `x_t` (as opposed to `h_{t-1}`).
    pub fn is_input_linear(self) -> bool {
        self.index() < 3
    }

    pub fn name(self) -> &'static str {
        match self {
            BlockId::Wir => "w_ir",
            BlockId::Wiz => "w_iz",
            BlockId::Win => "w_in",
            BlockId::Whr => "w_hr",
            BlockId::Whz => "w_hz",
            BlockId::Whn => "w_hn",
            BlockId::AddR => "add_r",
            BlockId::AddZ => "add_z",
            BlockId::AddN => "add_n",
            BlockId::SigR => "sig_r",
            BlockId::SigZ => "sig_z",
            BlockId::TanhN => "tanh_n",
            BlockId::MulR => "mul_r",
            BlockId::ComplZ => "compl_z",
            BlockId::MulNew => "mul_new",
            BlockId::MulOld => "mul_old",
            BlockId::AddH => "add_h",
        }
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A tensor grid observed during calibration: the cell input or a block output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Input,
    Block(BlockId),
}

impl Site {
    pub const COUNT: usize = NUM_BLOCKS + 1;

    pub fn all() -> impl Iterator<Item = Site> {
        std::iter::once(Site::Input).chain(BlockId::ALL.iter().map(|&b| Site::Block(b)))
    }

    pub fn index(self) -> usize {
        match self {
            Site::Input => 0,
            Site::Block(b) => b.index() + 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Site::Input => "input",
            Site::Block(b) => b.name(),
        }
    }

    pub fn from_name(name: &str) -> Option<Site> {
        Site::all().find(|s| s.name() == name)
    }
}

/// One bit-width per block, each in `[2, 8]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Genome([u8; NUM_BLOCKS]);

impl Genome {
    pub fn new(genes: [u8; NUM_BLOCKS]) -> Result<Self> {
        if let Some(g) = genes.iter().find(|g| !(MIN_GENE..=MAX_GENE).contains(g)) {
            return Err(Error::Genome(format!("gene {g} outside [{MIN_GENE},{MAX_GENE}]")));
        }
        Ok(Genome(genes))
    }

    pub fn uniform(bits: u8) -> Result<Self> {
        Self::new([bits; NUM_BLOCKS])
    }

    /// Bypasses the `[2, 8]` gene range; widths up to 16 are accepted for
    /// reference models and oracle tests. Not a valid search genome.
    pub fn wide(genes: [u8; NUM_BLOCKS]) -> Result<Self> {
        if genes.iter().any(|&g| !(2..=16).contains(&g)) {
            return Err(Error::Genome("bit-width outside [2,16]".into()));
        }
        Ok(Genome(genes))
    }

    pub fn genes(&self) -> &[u8; NUM_BLOCKS] {
        &self.0
    }

    pub fn bits(&self, block: BlockId) -> u32 {
        self.0[block.index()] as u32
    }

    pub fn with_gene(mut self, block: BlockId, bits: u8) -> Result<Self> {
        self.0[block.index()] = bits;
        Genome::new(self.0)
    }

    pub fn is_search_valid(&self) -> bool {
        self.0.iter().all(|g| (MIN_GENE..=MAX_GENE).contains(g))
    }

    /// Stable 64-bit FNV-1a hash of the genes.
    pub fn stable_hash(&self) -> u64 {
        self.0.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &g| (h ^ g as u64).wrapping_mul(0x0000_0100_0000_01b3))
    }
}

impl TryFrom<Vec<u8>> for Genome {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        let genes: [u8; NUM_BLOCKS] = v
            .try_into()
            .map_err(|v: Vec<u8>| Error::Genome(format!("expected {NUM_BLOCKS} genes, got {}", v.len())))?;
        Genome::wide(genes)
    }
}

impl From<Genome> for Vec<u8> {
    fn from(g: Genome) -> Self {
        g.0.to_vec()
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

/// Parses a comma-separated list of 17 genes in `[2, 8]`.
impl FromStr for Genome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let genes = s
            .split(',')
            .map(|t| t.trim().parse::<u8>().map_err(|_| Error::Genome(format!("`{}` is not a bit-width", t.trim()))))
            .collect::<Result<Vec<u8>>>()?;
        let genes: [u8; NUM_BLOCKS] = genes
            .try_into()
            .map_err(|v: Vec<u8>| Error::Genome(format!("expected {NUM_BLOCKS} genes, got {}", v.len())))?;
        Genome::new(genes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input_features: usize,
    pub hidden_size: usize,
    pub num_classes: usize,
}

impl ModelDims {
    pub fn new(input_features: usize, hidden_size: usize, num_classes: usize) -> Result<Self> {
        let dims = ModelDims { input_features, hidden_size, num_classes };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_features == 0 || self.hidden_size == 0 || self.num_classes == 0 {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Input width of a GRU dense layer.
    pub fn linear_cols(&self, block: BlockId) -> usize {
        if block.is_input_linear() {
            self.input_features
        } else {
            self.hidden_size
        }
    }
}
