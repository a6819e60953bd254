//! Bit-exact binary formats: CSR collections, ground-truth files, and the
//! serialized index container.
//!
//! All integers and floats are little-endian regardless of host. Readers
//! never trust claimed sizes for allocation: arrays stream in bounded
//! chunks, so corrupt headers surface as structured errors, not crashes.
//!
//! Layouts (version 1):
//!
//! * CSR: `nrows, ncols, nnz` as u64, then `nrows + 1` u64 row offsets,
//!   `nnz` u32 coordinate ids, `nnz` f32 weights.
//! * Ground truth: `nqueries, k` as u64, then per query `k` u32 doc ids
//!   followed by `k` f32 scores.
//! * Index (`SWIX`): magic+version word; build parameters
//!   (`lambda` u64, `beta` u64, `alpha` f32, `seed` u64); the forward index
//!   as an embedded CSR block; then the list count (u64) followed by, per
//!   list: coordinate (u32), block count (u64), and per block the member
//!   doc ids (u64 count + u32 ids) and the summary (u64 count + u32 ids +
//!   f32 weights). Lists are written in ascending coordinate order.
//!
//! The k-NN graph format (`SWKG`) lives in [`crate::graph`].

use std::collections::HashSet;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::eval::GroundTruth;
use crate::graph::GraphError;
use crate::index::{
    BuildError, BuildParams, ForwardIndex, IndexSizes, InvertedIndex, PostingBlock,
};
use crate::vector::{CoordId, DocId, SparseVector, VectorError};

const INDEX_MAGIC: &[u8; 4] = b"SWIX";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{section}: file ends prematurely")]
    Truncated { section: &'static str },
    #[error("{section}: i/o error: {source}")]
    Io {
        section: &'static str,
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found}")]
    UnsupportedVersion { found: u32 },
    #[error("{field} out of range: {value}")]
    FieldOutOfRange { field: &'static str, value: u64 },
    #[error("csr: indptr[0] is {value}, must be 0 (byte offset {offset})")]
    IndptrStart { value: u64, offset: u64 },
    #[error("csr: indptr decreases at row {row} (byte offset {offset})")]
    IndptrDecreasing { row: usize, offset: u64 },
    #[error("csr: indptr entry at row {row} exceeds nnz {nnz} (byte offset {offset})")]
    IndptrBeyondNnz { row: usize, nnz: u64, offset: u64 },
    #[error("csr: final indptr entry {last} does not equal nnz {nnz}")]
    IndptrEndMismatch { last: u64, nnz: u64 },
    #[error("csr row {row}: indices not strictly increasing (byte offset {offset})")]
    RowIndicesUnsorted { row: usize, offset: u64 },
    #[error("csr row {row}: index {index} not below ncols {ncols} (byte offset {offset})")]
    RowIndexOutOfRange {
        row: usize,
        index: CoordId,
        ncols: u64,
        offset: u64,
    },
    #[error("csr row {row}: non-finite value (byte offset {offset})")]
    NonFiniteValue { row: usize, offset: u64 },
    #[error("csr row {row}: zero value; zero entries must not be stored (byte offset {offset})")]
    ZeroValue { row: usize, offset: u64 },
    #[error("invalid graph structure: {0}")]
    Graph(GraphError),
    #[error("swix: invalid build parameters: {0}")]
    Params(BuildError),
    #[error("swix: list coordinates not strictly ascending at list {position}")]
    CoordsNotAscending { position: usize },
    #[error("swix: list {coord} has an empty block")]
    EmptyBlock { coord: CoordId },
    #[error("swix: list {coord} holds {blocks} blocks, over beta={beta}")]
    TooManyBlocks {
        coord: CoordId,
        blocks: usize,
        beta: usize,
    },
    #[error("swix: list {coord} references doc {doc} outside the collection of {n}")]
    DocOutOfRange { coord: CoordId, doc: DocId, n: usize },
    #[error("swix: list {coord} holds doc {doc} twice")]
    DuplicateDoc { coord: CoordId, doc: DocId },
    #[error("swix: list {coord} holds {docs} docs, over lambda={lambda}")]
    ListTooLong {
        coord: CoordId,
        docs: usize,
        lambda: usize,
    },
    #[error("swix: doc {doc} in list {coord} lacks that coordinate")]
    DocMissingCoord { coord: CoordId, doc: DocId },
    #[error("swix: invalid summary in list {coord}: {source}")]
    InvalidSummary {
        coord: CoordId,
        source: VectorError,
    },
    #[error("swix: invalid forward index: {0}")]
    Forward(BuildError),
}

impl FormatError {
    pub(crate) fn truncated(section: &'static str, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::UnexpectedEof {
            FormatError::Truncated { section }
        } else {
            FormatError::Io { section, source }
        }
    }

    pub(crate) fn from_graph(e: GraphError) -> Self {
        FormatError::Graph(e)
    }
}

/// Reader wrapper tracking the byte offset for error reporting.
struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

/// Byte sink that only counts, for size accounting.
struct CountingWriter {
    count: u64,
}

impl Write for CountingWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.count += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

const CHUNK_ELEMS: u64 = 8192;

/// Reads exactly `len` bytes in bounded chunks, so a corrupt length field
/// cannot trigger a huge allocation.
pub(crate) fn read_bytes_bounded<R: Read>(
    r: &mut R,
    len: u64,
    section: &'static str,
) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    let mut remaining = len;
    let mut chunk = [0u8; 8192];
    while remaining > 0 {
        let take = remaining.min(chunk.len() as u64) as usize;
        r.read_exact(&mut chunk[..take])
            .map_err(|e| FormatError::truncated(section, e))?;
        out.extend_from_slice(&chunk[..take]);
        remaining -= take as u64;
    }
    Ok(out)
}

macro_rules! chunked_array_reader {
    ($name:ident, $ty:ty, $read:ident) => {
        fn $name<R: Read>(
            r: &mut R,
            count: u64,
            section: &'static str,
        ) -> Result<Vec<$ty>, FormatError> {
            let mut out = Vec::new();
            let mut remaining = count;
            let mut buf = [0 as $ty; CHUNK_ELEMS as usize];
            while remaining > 0 {
                let take = remaining.min(CHUNK_ELEMS) as usize;
                r.$read::<LittleEndian>(&mut buf[..take])
                    .map_err(|e| FormatError::truncated(section, e))?;
                out.extend_from_slice(&buf[..take]);
                remaining -= take as u64;
            }
            Ok(out)
        }
    };
}

chunked_array_reader!(read_u64_array, u64, read_u64_into);
chunked_array_reader!(read_u32_array, u32, read_u32_into);

fn read_f32_array<R: Read>(
    r: &mut R,
    count: u64,
    section: &'static str,
) -> Result<Vec<f32>, FormatError> {
    let bits = read_u32_array(r, count, section)?;
    Ok(bits.into_iter().map(f32::from_bits).collect())
}

fn read_u64<R: Read>(r: &mut R, section: &'static str) -> Result<u64, FormatError> {
    r.read_u64::<LittleEndian>()
        .map_err(|e| FormatError::truncated(section, e))
}

fn read_u32<R: Read>(r: &mut R, section: &'static str) -> Result<u32, FormatError> {
    r.read_u32::<LittleEndian>()
        .map_err(|e| FormatError::truncated(section, e))
}

fn read_f32<R: Read>(r: &mut R, section: &'static str) -> Result<f32, FormatError> {
    r.read_f32::<LittleEndian>()
        .map_err(|e| FormatError::truncated(section, e))
}

fn io_err(section: &'static str) -> impl Fn(std::io::Error) -> FormatError {
    move |source| FormatError::Io { section, source }
}

/// A parsed CSR file: the column count plus one sparse vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub ncols: u64,
    pub rows: Vec<SparseVector>,
}

impl CsrMatrix {
    pub fn into_forward(self) -> Result<ForwardIndex, BuildError> {
        ForwardIndex::with_dim(self.rows, self.ncols)
    }
}

/// Writes rows in the CSR layout. Every row id must be below `ncols`.
pub fn write_csr<W: Write>(
    rows: &[SparseVector],
    ncols: u64,
    mut w: W,
) -> Result<(), FormatError> {
    let nnz: u64 = rows.iter().map(|r| r.nnz() as u64).sum();
    let indices_start = 24 + (rows.len() as u64 + 1) * 8;
    let mut seen: u64 = 0;
    for (row, v) in rows.iter().enumerate() {
        if let Some(max) = v.max_id() {
            if u64::from(max) >= ncols {
                let position = v.ids().iter().position(|&i| u64::from(i) >= ncols).unwrap();
                return Err(FormatError::RowIndexOutOfRange {
                    row,
                    index: v.ids()[position],
                    ncols,
                    offset: indices_start + (seen + position as u64) * 4,
                });
            }
        }
        seen += v.nnz() as u64;
    }

    let section = "csr";
    w.write_u64::<LittleEndian>(rows.len() as u64)
        .map_err(io_err(section))?;
    w.write_u64::<LittleEndian>(ncols).map_err(io_err(section))?;
    w.write_u64::<LittleEndian>(nnz).map_err(io_err(section))?;
    let mut cursor: u64 = 0;
    w.write_u64::<LittleEndian>(0).map_err(io_err(section))?;
    for v in rows {
        cursor += v.nnz() as u64;
        w.write_u64::<LittleEndian>(cursor).map_err(io_err(section))?;
    }
    for v in rows {
        for &id in v.ids() {
            w.write_u32::<LittleEndian>(id).map_err(io_err(section))?;
        }
    }
    for v in rows {
        for &weight in v.weights() {
            w.write_f32::<LittleEndian>(weight).map_err(io_err(section))?;
        }
    }
    Ok(())
}

/// Reads and validates a CSR file. Errors name the offending row and byte
/// offset.
pub fn read_csr<R: Read>(r: R) -> Result<CsrMatrix, FormatError> {
    let mut r = CountingReader::new(r);
    read_csr_body(&mut r)
}

fn read_csr_body<R: Read>(r: &mut CountingReader<R>) -> Result<CsrMatrix, FormatError> {
    let base = r.offset;
    let nrows = read_u64(r, "csr header")?;
    let ncols = read_u64(r, "csr header")?;
    let nnz = read_u64(r, "csr header")?;

    let indptr_count = nrows
        .checked_add(1)
        .ok_or(FormatError::FieldOutOfRange {
            field: "csr nrows",
            value: nrows,
        })?;
    let indptr = read_u64_array(r, indptr_count, "csr indptr")?;
    let indptr_offset = |i: u64| base + 24 + i * 8;
    if indptr[0] != 0 {
        return Err(FormatError::IndptrStart {
            value: indptr[0],
            offset: indptr_offset(0),
        });
    }
    for i in 1..indptr.len() {
        if indptr[i] < indptr[i - 1] {
            return Err(FormatError::IndptrDecreasing {
                row: i - 1,
                offset: indptr_offset(i as u64),
            });
        }
        if indptr[i] > nnz {
            return Err(FormatError::IndptrBeyondNnz {
                row: i - 1,
                nnz,
                offset: indptr_offset(i as u64),
            });
        }
    }
    if *indptr.last().expect("indptr is non-empty") != nnz {
        return Err(FormatError::IndptrEndMismatch {
            last: *indptr.last().unwrap(),
            nnz,
        });
    }

    let indices_start = indptr_offset(indptr_count);
    let indices = read_u32_array(r, nnz, "csr indices")?;
    let values_start = indices_start + nnz * 4;
    let values = read_f32_array(r, nnz, "csr values")?;

    let mut rows = Vec::with_capacity(indptr.len() - 1);
    for row in 0..(indptr.len() - 1) {
        let lo = indptr[row] as usize;
        let hi = indptr[row + 1] as usize;
        let ids = &indices[lo..hi];
        let weights = &values[lo..hi];
        for (pos, &id) in ids.iter().enumerate() {
            if u64::from(id) >= ncols {
                return Err(FormatError::RowIndexOutOfRange {
                    row,
                    index: id,
                    ncols,
                    offset: indices_start + (lo + pos) as u64 * 4,
                });
            }
        }
        let vector =
            SparseVector::new(ids.to_vec(), weights.to_vec()).map_err(|e| match e {
                VectorError::UnsortedIds { position } => FormatError::RowIndicesUnsorted {
                    row,
                    offset: indices_start + (lo + position) as u64 * 4,
                },
                VectorError::NonFiniteWeight { position } => FormatError::NonFiniteValue {
                    row,
                    offset: values_start + (lo + position) as u64 * 4,
                },
                VectorError::ZeroWeight { position } => FormatError::ZeroValue {
                    row,
                    offset: values_start + (lo + position) as u64 * 4,
                },
                VectorError::LengthMismatch { .. } => unreachable!("slices share length"),
            })?;
        rows.push(vector);
    }
    Ok(CsrMatrix { ncols, rows })
}

/// Writes ground truth: `(nqueries, k)` header then per query the ids and
/// the scores.
pub fn write_ground_truth<W: Write>(truth: &GroundTruth, mut w: W) -> Result<(), FormatError> {
    let section = "ground truth";
    w.write_u64::<LittleEndian>(truth.len() as u64)
        .map_err(io_err(section))?;
    w.write_u64::<LittleEndian>(truth.k() as u64)
        .map_err(io_err(section))?;
    for entry in truth.entries() {
        for &(doc, _) in entry {
            w.write_u32::<LittleEndian>(doc).map_err(io_err(section))?;
        }
        for &(_, score) in entry {
            w.write_f32::<LittleEndian>(score).map_err(io_err(section))?;
        }
    }
    Ok(())
}

/// Reads a ground-truth file written by [`write_ground_truth`].
pub fn read_ground_truth<R: Read>(mut r: R) -> Result<GroundTruth, FormatError> {
    let nqueries = read_u64(&mut r, "ground truth header")?;
    let k = read_u64(&mut r, "ground truth header")?;
    if k > u32::MAX as u64 {
        return Err(FormatError::FieldOutOfRange {
            field: "ground truth k",
            value: k,
        });
    }
    let mut entries = Vec::new();
    for _ in 0..nqueries {
        let ids = read_u32_array(&mut r, k, "ground truth ids")?;
        let scores = read_f32_array(&mut r, k, "ground truth scores")?;
        entries.push(ids.into_iter().zip(scores).collect());
    }
    Ok(GroundTruth::from_uniform(k as usize, entries))
}

fn write_params_section<W: Write>(params: &BuildParams, mut w: W) -> Result<(), FormatError> {
    let section = "swix params";
    w.write_u64::<LittleEndian>(params.lambda as u64)
        .map_err(io_err(section))?;
    w.write_u64::<LittleEndian>(params.beta as u64)
        .map_err(io_err(section))?;
    w.write_f32::<LittleEndian>(params.alpha)
        .map_err(io_err(section))?;
    w.write_u64::<LittleEndian>(params.seed)
        .map_err(io_err(section))?;
    Ok(())
}

fn write_inverted_section<W: Write>(
    idx: &InvertedIndex,
    mut w: W,
) -> Result<(), FormatError> {
    let section = "swix lists";
    w.write_u64::<LittleEndian>(idx.num_lists() as u64)
        .map_err(io_err(section))?;
    for (coord, blocks) in idx.lists() {
        w.write_u32::<LittleEndian>(coord).map_err(io_err(section))?;
        w.write_u64::<LittleEndian>(blocks.len() as u64)
            .map_err(io_err(section))?;
        for block in blocks {
            w.write_u64::<LittleEndian>(block.docs.len() as u64)
                .map_err(io_err(section))?;
            for &doc in &block.docs {
                w.write_u32::<LittleEndian>(doc).map_err(io_err(section))?;
            }
            w.write_u64::<LittleEndian>(block.summary.nnz() as u64)
                .map_err(io_err(section))?;
            for &id in block.summary.ids() {
                w.write_u32::<LittleEndian>(id).map_err(io_err(section))?;
            }
            for &weight in block.summary.weights() {
                w.write_f32::<LittleEndian>(weight).map_err(io_err(section))?;
            }
        }
    }
    Ok(())
}

/// Writes the full index container (build parameters, forward index,
/// inverted lists).
pub fn write_index<W: Write>(
    idx: &InvertedIndex,
    fwd: &ForwardIndex,
    mut w: W,
) -> Result<(), FormatError> {
    let section = "swix header";
    w.write_all(INDEX_MAGIC).map_err(io_err(section))?;
    w.write_u32::<LittleEndian>(INDEX_VERSION)
        .map_err(io_err(section))?;
    write_params_section(&idx.params(), &mut w)?;
    write_csr(fwd.docs(), fwd.dim(), &mut w)?;
    write_inverted_section(idx, &mut w)
}

/// Reads an index container, validating structure against the embedded
/// parameters and forward index.
pub fn read_index<R: Read>(r: R) -> Result<(InvertedIndex, ForwardIndex), FormatError> {
    let mut r = CountingReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| FormatError::truncated("swix magic", e))?;
    if &magic != INDEX_MAGIC {
        return Err(FormatError::BadMagic {
            expected: *INDEX_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(&mut r, "swix version")?;
    if version != INDEX_VERSION {
        return Err(FormatError::UnsupportedVersion { found: version });
    }
    let lambda = read_u64(&mut r, "swix params")?;
    let beta = read_u64(&mut r, "swix params")?;
    let alpha = read_f32(&mut r, "swix params")?;
    let seed = read_u64(&mut r, "swix params")?;
    if lambda > usize::MAX as u64 || beta > usize::MAX as u64 {
        return Err(FormatError::FieldOutOfRange {
            field: "swix params",
            value: lambda.max(beta),
        });
    }
    let params = BuildParams::new(lambda as usize, beta as usize, alpha, seed)
        .map_err(FormatError::Params)?;

    let fwd = read_csr_body(&mut r)?
        .into_forward()
        .map_err(FormatError::Forward)?;

    let n_lists = read_u64(&mut r, "swix lists")?;
    let mut lists = std::collections::BTreeMap::new();
    let mut prev_coord: Option<CoordId> = None;
    for position in 0..n_lists {
        let coord = read_u32(&mut r, "swix list coord")?;
        if prev_coord.is_some_and(|p| coord <= p) {
            return Err(FormatError::CoordsNotAscending {
                position: position as usize,
            });
        }
        prev_coord = Some(coord);
        let n_blocks = read_u64(&mut r, "swix block count")?;
        let mut blocks = Vec::new();
        let mut docs_in_list: HashSet<DocId> = HashSet::new();
        for _ in 0..n_blocks {
            let n_docs = read_u64(&mut r, "swix block size")?;
            if n_docs == 0 {
                return Err(FormatError::EmptyBlock { coord });
            }
            let docs = read_u32_array(&mut r, n_docs, "swix block docs")?;
            for &doc in &docs {
                if doc as usize >= fwd.len() {
                    return Err(FormatError::DocOutOfRange {
                        coord,
                        doc,
                        n: fwd.len(),
                    });
                }
                if !docs_in_list.insert(doc) {
                    return Err(FormatError::DuplicateDoc { coord, doc });
                }
                if fwd.doc(doc).ids().binary_search(&coord).is_err() {
                    return Err(FormatError::DocMissingCoord { coord, doc });
                }
            }
            let n_summary = read_u64(&mut r, "swix summary size")?;
            let ids = read_u32_array(&mut r, n_summary, "swix summary ids")?;
            let weights = read_f32_array(&mut r, n_summary, "swix summary weights")?;
            let summary = SparseVector::new(ids, weights)
                .map_err(|source| FormatError::InvalidSummary { coord, source })?;
            blocks.push(PostingBlock { docs, summary });
        }
        if blocks.len() > params.beta {
            return Err(FormatError::TooManyBlocks {
                coord,
                blocks: blocks.len(),
                beta: params.beta,
            });
        }
        if docs_in_list.len() > params.lambda {
            return Err(FormatError::ListTooLong {
                coord,
                docs: docs_in_list.len(),
                lambda: params.lambda,
            });
        }
        lists.insert(coord, blocks);
    }
    Ok((InvertedIndex::from_parts(lists, params), fwd))
}

/// Serialized sizes of the index components, measured by writing to a
/// counting sink with the same code paths as the real writer.
pub(crate) fn measure_index_sizes(idx: &InvertedIndex, fwd: &ForwardIndex) -> IndexSizes {
    let mut counter = CountingWriter { count: 0 };
    write_csr(fwd.docs(), fwd.dim(), &mut counter).expect("counting writer never fails");
    let forward_bytes = counter.count;

    let mut counter = CountingWriter { count: 0 };
    write_inverted_section(idx, &mut counter).expect("counting writer never fails");
    let inverted_bytes = counter.count;

    // Magic+version word plus the parameter block.
    let header_bytes = 8 + 28;
    IndexSizes {
        forward_bytes,
        inverted_bytes,
        total_bytes: header_bytes + forward_bytes + inverted_bytes,
    }
}
