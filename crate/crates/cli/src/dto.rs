//! JSON wire formats: complex scalars as `[re, im]` pairs, matrices as
//! nested row-major arrays, algebras as `{"blocks": [...]}`. Every document
//! carries a schema id and version; unknown fields are rejected so golden
//! files stay honest.

use cpdil::algebra::BlockAlgebra;
use cpdil::corr::{BilinearMap, CorrVector, Correspondence};
use cpdil::cpmap::CPMap;
use cpdil::numkit::{CMatrix, Tolerance, C64};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexDto(pub f64, pub f64);

pub type MatrixDto = Vec<Vec<ComplexDto>>;

pub fn matrix_to_dto(m: &CMatrix) -> MatrixDto {
    (0..m.rows())
        .map(|i| {
            (0..m.cols())
                .map(|j| ComplexDto(m.get(i, j).re, m.get(i, j).im))
                .collect()
        })
        .collect()
}

pub fn matrix_from_dto(dto: &MatrixDto) -> Result<CMatrix, String> {
    let rows = dto.len();
    let cols = dto.first().map_or(0, |r| r.len());
    if dto.iter().any(|r| r.len() != cols) {
        return Err("ragged matrix rows".into());
    }
    let mut m = CMatrix::zeros(rows, cols);
    for (i, row) in dto.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            m.set(i, j, C64::new(z.0, z.1));
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraDto {
    pub blocks: Vec<usize>,
}

impl AlgebraDto {
    pub fn to_algebra(&self) -> Result<BlockAlgebra, String> {
        BlockAlgebra::new(self.blocks.clone()).map_err(|e| e.to_string())
    }

    pub fn from_algebra(a: &BlockAlgebra) -> Self {
        AlgebraDto {
            blocks: a.block_dims().to_vec(),
        }
    }
}

/// `{"schema":"cpmap", "version":1, "algebra":…, "kraus":[…]}`
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpMapDto {
    pub schema: String,
    pub version: u32,
    pub algebra: AlgebraDto,
    pub kraus: Vec<MatrixDto>,
}

impl CpMapDto {
    pub fn to_map(&self, tol: &Tolerance) -> Result<CPMap, String> {
        if self.schema != "cpmap" {
            return Err(format!("expected schema \"cpmap\", got {:?}", self.schema));
        }
        let alg = self.algebra.to_algebra()?;
        let kraus = self
            .kraus
            .iter()
            .map(matrix_from_dto)
            .collect::<Result<Vec<_>, _>>()?;
        CPMap::new(alg.clone(), alg, kraus, tol).map_err(|e| e.to_string())
    }

    pub fn from_map(map: &CPMap) -> Self {
        CpMapDto {
            schema: "cpmap".into(),
            version: VERSION,
            algebra: AlgebraDto::from_algebra(map.domain()),
            kraus: map.kraus().iter().map(matrix_to_dto).collect(),
        }
    }
}

/// A pair of CP maps on one algebra.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpPairDto {
    pub schema: String,
    pub version: u32,
    pub algebra: AlgebraDto,
    pub first: Vec<MatrixDto>,
    pub second: Vec<MatrixDto>,
}

impl CpPairDto {
    pub fn to_maps(&self, tol: &Tolerance) -> Result<(CPMap, CPMap), String> {
        if self.schema != "cpmap-pair" {
            return Err(format!(
                "expected schema \"cpmap-pair\", got {:?}",
                self.schema
            ));
        }
        let alg = self.algebra.to_algebra()?;
        let parse = |ms: &Vec<MatrixDto>| -> Result<CPMap, String> {
            let kraus = ms
                .iter()
                .map(matrix_from_dto)
                .collect::<Result<Vec<_>, _>>()?;
            CPMap::new(alg.clone(), alg.clone(), kraus, tol).map_err(|e| e.to_string())
        };
        Ok((parse(&self.first)?, parse(&self.second)?))
    }
}

/// One element of a correspondence: components indexed by block pair and
/// multiplicity slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementDto {
    pub components: Vec<ComponentDto>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDto {
    pub left_block: usize,
    pub right_block: usize,
    pub slot: usize,
    pub matrix: MatrixDto,
}

pub fn element_to_dto(v: &CorrVector) -> ElementDto {
    let corr = v.parent();
    let mut components = Vec::new();
    for k in 0..corr.left().num_blocks() {
        for l in 0..corr.right().num_blocks() {
            for m in 0..corr.mult_at(k, l) {
                components.push(ComponentDto {
                    left_block: k,
                    right_block: l,
                    slot: m,
                    matrix: matrix_to_dto(v.comp(k, l, m)),
                });
            }
        }
    }
    ElementDto { components }
}

pub fn element_from_dto(corr: &Correspondence, dto: &ElementDto) -> Result<CorrVector, String> {
    let mut v = corr.zero_vector();
    for c in &dto.components {
        if c.left_block >= corr.left().num_blocks()
            || c.right_block >= corr.right().num_blocks()
            || c.slot >= corr.mult_at(c.left_block, c.right_block)
        {
            return Err("component index out of range".into());
        }
        let m = matrix_from_dto(&c.matrix)?;
        if m.rows() != corr.left().block_dims()[c.left_block]
            || m.cols() != corr.right().block_dims()[c.right_block]
        {
            return Err("component matrix shape mismatch".into());
        }
        v.set_comp(c.left_block, c.right_block, c.slot, m);
    }
    Ok(v)
}

/// A bilinear map, stored per block pair. Blocks may be omitted when zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilinearDto {
    pub blocks: Vec<BilinearBlockDto>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilinearBlockDto {
    pub left_block: usize,
    pub right_block: usize,
    pub matrix: MatrixDto,
}

pub fn bilinear_from_dto(
    source: &Correspondence,
    target: &Correspondence,
    dto: &BilinearDto,
) -> Result<BilinearMap, String> {
    let mut map = BilinearMap::zero(source, target);
    for b in &dto.blocks {
        let m = matrix_from_dto(&b.matrix)?;
        if b.left_block >= source.left().num_blocks()
            || b.right_block >= source.right().num_blocks()
        {
            return Err("bilinear block out of range".into());
        }
        if m.rows() != target.mult_at(b.left_block, b.right_block)
            || m.cols() != source.mult_at(b.left_block, b.right_block)
        {
            return Err(format!(
                "bilinear block ({},{}) must be {}×{}",
                b.left_block,
                b.right_block,
                target.mult_at(b.left_block, b.right_block),
                source.mult_at(b.left_block, b.right_block)
            ));
        }
        *map.block_mut(b.left_block, b.right_block) = m;
    }
    Ok(map)
}

/// Flip data over one algebra: marginal correspondences by multiplicity
/// matrix, flips `𝔉_{j,i}` (1-based, `j<i`), optional distinguished vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipDataDto {
    pub schema: String,
    pub version: u32,
    pub algebra: AlgebraDto,
    pub spaces: Vec<Vec<Vec<usize>>>,
    pub flips: Vec<FlipEntryDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<ElementDto>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipEntryDto {
    pub j: usize,
    pub i: usize,
    pub map: BilinearDto,
}

impl FlipDataDto {
    pub fn to_flip_data(&self) -> Result<cpdil::systems::FlipData, String> {
        if self.schema != "flip-data" {
            return Err(format!(
                "expected schema \"flip-data\", got {:?}",
                self.schema
            ));
        }
        let alg = self.algebra.to_algebra()?;
        let spaces: Vec<Correspondence> = self
            .spaces
            .iter()
            .map(|mult| {
                Correspondence::new(alg.clone(), alg.clone(), mult.clone())
                    .map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()?;
        let mut flips = BTreeMap::new();
        for entry in &self.flips {
            if entry.j == 0 || entry.i <= entry.j || entry.i > spaces.len() {
                return Err(format!(
                    "flip indices ({},{}) out of range",
                    entry.j, entry.i
                ));
            }
            let src = cpdil::corr::tensor(&spaces[entry.i - 1], &spaces[entry.j - 1])
                .map_err(|e| e.to_string())?;
            let tgt = cpdil::corr::tensor(&spaces[entry.j - 1], &spaces[entry.i - 1])
                .map_err(|e| e.to_string())?;
            flips.insert(
                (entry.j, entry.i),
                bilinear_from_dto(&src, &tgt, &entry.map)?,
            );
        }
        let family =
            cpdil::perm::FlipFamily::new(spaces.clone(), flips).map_err(|e| e.to_string())?;
        let vectors = match &self.vectors {
            None => None,
            Some(vs) => {
                if vs.len() != spaces.len() {
                    return Err("need one distinguished vector per space".into());
                }
                Some(
                    vs.iter()
                        .zip(&spaces)
                        .map(|(dto, sp)| element_from_dto(sp, dto))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
        };
        Ok(cpdil::systems::FlipData { family, vectors })
    }
}

/// A dilation triple: ambient algebra, endomorphism generators by Kraus
/// families, and a projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleDto {
    pub schema: String,
    pub version: u32,
    pub algebra: AlgebraDto,
    pub generators: Vec<Vec<MatrixDto>>,
    pub projection: MatrixDto,
}

impl TripleDto {
    pub fn to_triple(&self, tol: &Tolerance) -> Result<cpdil::dilate::DilationTriple, String> {
        if self.schema != "dilation-triple" {
            return Err(format!(
                "expected schema \"dilation-triple\", got {:?}",
                self.schema
            ));
        }
        let alg = self.algebra.to_algebra()?;
        let generators = self
            .generators
            .iter()
            .map(|ms| {
                let kraus = ms
                    .iter()
                    .map(matrix_from_dto)
                    .collect::<Result<Vec<_>, _>>()?;
                CPMap::new(alg.clone(), alg.clone(), kraus, tol).map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        let p_rep = matrix_from_dto(&self.projection)?;
        let p = alg
            .element_from_rep(&p_rep, tol)
            .map_err(|e| e.to_string())?;
        cpdil::dilate::DilationTriple::new_lenient(alg, generators, p, tol)
            .map_err(|e| e.to_string())
    }
}

/// A row contraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowContractionDto {
    pub schema: String,
    pub version: u32,
    pub ops: Vec<MatrixDto>,
}

/// A claim line of a verification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimDto {
    pub id: String,
    pub expected: String,
    pub computed: String,
    pub residual: f64,
    pub pass: bool,
}

/// `{"schema":"report", …, "claims":[…], "verdict":…}`
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDto {
    pub schema: String,
    pub version: u32,
    pub example: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    pub claims: Vec<ClaimDto>,
    pub verdicts: Vec<String>,
    pub verdict: bool,
}

impl ReportDto {
    pub fn from_report(r: &cpdil::gallery::ExampleReport) -> Self {
        ReportDto {
            schema: "report".into(),
            version: VERSION,
            example: r.example.clone(),
            seed: r.seed,
            trials: r.trials,
            claims: r
                .claims
                .iter()
                .map(|c| ClaimDto {
                    id: c.id.clone(),
                    expected: c.expected.clone(),
                    computed: c.computed.clone(),
                    residual: c.residual,
                    pass: c.pass,
                })
                .collect(),
            verdicts: r.verdicts.clone(),
            verdict: r.passed(),
        }
    }
}

/// Validation report of a truncated system.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSummaryDto {
    pub schema: String,
    pub version: u32,
    pub kind: String,
    pub cap: Vec<usize>,
    pub members: BTreeMap<String, Vec<Vec<usize>>>,
    pub validation_passed: bool,
    pub failures: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn index_key(n: &[usize]) -> String {
    n.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn system_summary(
    sys: &cpdil::systems::TruncatedSystem,
    tol: &Tolerance,
    notes: Vec<String>,
) -> SystemSummaryDto {
    let report = cpdil::systems::validate(sys, tol);
    let mut members = BTreeMap::new();
    for n in sys.cap.indices() {
        members.insert(index_key(&n), sys.member(&n).mult().clone());
    }
    SystemSummaryDto {
        schema: "system-summary".into(),
        version: VERSION,
        kind: match sys.kind {
            cpdil::systems::SystemKind::Sub => "sub".into(),
            cpdil::systems::SystemKind::Super => "super".into(),
            cpdil::systems::SystemKind::Product => "product".into(),
        },
        cap: sys.cap.cap().to_vec(),
        members,
        validation_passed: report.passed(),
        failures: report
            .failures()
            .iter()
            .map(|l| format!("{}: residual {:?}", l.label, l.residual))
            .collect(),
        notes,
    }
}
