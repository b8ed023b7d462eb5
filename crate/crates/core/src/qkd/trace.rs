use std::io::Write;

use serde::Serialize;

/// One row of a round trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PulseRecord {
    pub pulse_index: usize,
    pub alice_bit: u8,
    pub alice_basis: u8,
    pub eve_acted: u8,
    pub bob_basis: u8,
    pub bob_bit: u8,
    pub sifted: u8,
    pub disclosed: u8,
}

/// Columns: pulse_index, alice_bit, alice_basis, eve_acted, bob_basis,
/// bob_bit, sifted, disclosed.
pub fn write_trace_csv<W: Write>(records: &[PulseRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
