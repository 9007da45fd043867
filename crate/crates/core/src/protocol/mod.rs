//! Honest-party behaviour: challenge scheduling, the tag's immediate
//! response, per-round verification and the authentication decision.

mod config;
mod messages;
mod multilat;
mod schedule;
mod tag;
mod verify;

pub use config::{Mode, ProtocolConfig, ProtocolError};
pub use messages::{BlockRequest, BlockResponse, ChallengeMessage, MacSlots, Message, ResponseMessage, StationId};
pub(crate) use multilat::verify_block_station;
pub use multilat::{authenticate_3d, median, run_3d_round, BlockRound, DistanceBound};
pub use schedule::{schedule_challenges_1d, schedule_requests};
pub use tag::{BurnReason, Tag, TagReaction};
pub use verify::{
    decide, verify_round, verify_station, AuthDecision, Failure, FailureCause, ObservedResponse, RoundVerdict,
    StationVerdict,
};
