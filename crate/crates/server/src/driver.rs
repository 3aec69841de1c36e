use std::sync::Arc;
use std::time::Duration;

use ainsight_core::pipeline::Session;
use ainsight_core::Error;
use tracing::{debug, warn};

pub const DEFAULT_POLL: Duration = Duration::from_millis(250);

/// Runs a session's ticks as they fall due on the session clock, until the
/// session is finished. Ticks run on the blocking pool because providers
/// may block on network calls.
pub(crate) fn spawn(session: Arc<Session>, poll: Duration) {
    tokio::spawn(async move {
        loop {
            if session.is_finished() {
                break;
            }
            let now = session.clock().now_ms();
            let due = session.next_tick_due_ms();
            if now < due {
                tokio::time::sleep(Duration::from_millis(due - now).min(poll)).await;
                continue;
            }
            let s = session.clone();
            match tokio::task::spawn_blocking(move || s.advance_to(now)).await {
                Ok(Ok(reports)) => debug!(session = session.id(), ticks = reports.len(), "ticked"),
                Ok(Err(Error::SessionFinished(_))) => break,
                Ok(Err(e)) => {
                    warn!(session = session.id(), %e, "tick driver stopped");
                    break;
                }
                Err(e) => {
                    warn!(session = session.id(), %e, "tick task panicked");
                    break;
                }
            }
        }
        debug!(session = session.id(), "tick driver exited");
    });
}
