//! Patient-card lifecycle.
//!
//! | from         | event           | to           | role     |
//! |--------------|-----------------|--------------|----------|
//! | Waiting      | StartDoctorExam | InDoctorExam | Doctor   |
//! | InDoctorExam | SendToLab       | InLabExam    | Doctor   |
//! | InLabExam    | LabDone         | InDoctorExam | Laborant |
//! | InDoctorExam | Close           | Complete     | Staff    |
//!
//! Every other (status, event) pair is illegal. Lab round-trips may repeat.

use crate::access::Role;
use crate::model::{CardEvent, CardStatus};

/// Role allowed to fire `event`.
pub fn event_role(event: CardEvent) -> Role {
    match event {
        CardEvent::StartDoctorExam | CardEvent::SendToLab => Role::Doctor,
        CardEvent::LabDone => Role::Laborant,
        CardEvent::Close => Role::Staff,
    }
}

/// Target status, or `None` if the pair is not in the table.
pub fn next_status(from: CardStatus, event: CardEvent) -> Option<CardStatus> {
    use CardEvent::*;
    use CardStatus::*;
    match (from, event) {
        (Waiting, StartDoctorExam) => Some(InDoctorExam),
        (InDoctorExam, SendToLab) => Some(InLabExam),
        (InLabExam, LabDone) => Some(InDoctorExam),
        (InDoctorExam, Close) => Some(Complete),
        _ => None,
    }
}

/// Events that are legal from `status`, in table order.
pub fn legal_events(status: CardStatus) -> Vec<CardEvent> {
    CardEvent::ALL
        .into_iter()
        .filter(|e| next_status(status, *e).is_some())
        .collect()
}
