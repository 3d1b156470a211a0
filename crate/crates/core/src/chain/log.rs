//! Append-only block log: each record is a u32 BE length and a canonical block.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::codec::{Decode, DecodeError, Encode};
use crate::types::Block;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("block log io: {0}")]
    Io(#[from] io::Error),
    #[error("block log truncated at byte {0}")]
    Truncated(usize),
    #[error("block log record {index}: {source}")]
    Decode { index: usize, source: DecodeError },
}

pub struct BlockLog {
    out: Box<dyn Write + Send + Sync>,
}

impl std::fmt::Debug for BlockLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("BlockLog")
    }
}

impl BlockLog {
    /// Starts a fresh log, truncating any existing file.
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self::from_writer(BufWriter::new(File::create(path)?)))
    }

    pub fn append(path: &Path) -> io::Result<Self> {
        Ok(Self::from_writer(BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?)))
    }

    pub fn from_writer(w: impl Write + Send + Sync + 'static) -> Self {
        BlockLog { out: Box::new(w) }
    }

    /// Writes and flushes one record.
    pub fn write(&mut self, block: &Block) -> io::Result<()> {
        let bytes = block.encode();
        self.out.write_all(&(bytes.len() as u32).to_be_bytes())?;
        self.out.write_all(&bytes)?;
        self.out.flush()
    }
}

pub fn read_log(path: &Path) -> Result<Vec<Block>, LogError> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let mut blocks = Vec::new();
    let mut pos = 0;
    while pos < buf.len() {
        let Some(len) = buf.get(pos..pos + 4) else { return Err(LogError::Truncated(pos)) };
        let len = u32::from_be_bytes(len.try_into().expect("4 bytes")) as usize;
        let Some(rec) = buf.get(pos + 4..pos + 4 + len) else { return Err(LogError::Truncated(pos)) };
        let block = Block::decode(rec).map_err(|source| LogError::Decode { index: blocks.len(), source })?;
        blocks.push(block);
        pos += 4 + len;
    }
    Ok(blocks)
}
