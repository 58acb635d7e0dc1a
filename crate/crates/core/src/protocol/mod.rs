//! What crosses the boundary between a data node and the central generator:
//! message types, their byte encoding, the two transports that carry them, and
//! the ledger that counts every byte.

mod codec;
mod ledger;
mod transport;

pub use codec::{
    decode, encode, read_frame, write_frame, Control, DecodeError, EncodeError, Message, Payload,
    SynthChannel, Variant, WireTensor, FRAME_HEADER_LEN, MAGIC, MAX_FRAME_LEN, VERSION,
};
pub use ledger::{
    ledger_report, parameter_sharing_bytes, BandwidthLedger, BandwidthReport, Direction,
    LedgerEvent, LinkSummary, Traffic,
};
pub use transport::{link_pair, Endpoint, TransportError, TransportKind};
