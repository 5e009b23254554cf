use crate::kernel::{Context, Entity, EntityError, EntityId, EventTag, SimEvent};
use crate::msg::Msg;
use crate::network::Endpoint;

/// Storage endpoint: source of mapper input and sink of job output. Read
/// and write requests are handed to the controller as packets.
pub struct StorageAreaNetwork {
    name: String,
    controller: EntityId,
    bits_read: f64,
    bits_written: f64,
    requests: u64,
}

impl StorageAreaNetwork {
    pub fn new(name: impl Into<String>, controller: EntityId) -> Self {
        Self {
            name: name.into(),
            controller,
            bits_read: 0.0,
            bits_written: 0.0,
            requests: 0,
        }
    }

    pub fn bits_read(&self) -> f64 {
        self.bits_read
    }

    pub fn bits_written(&self) -> f64 {
        self.bits_written
    }

    pub fn requests(&self) -> u64 {
        self.requests
    }
}

impl Entity<Msg> for StorageAreaNetwork {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, event: SimEvent<Msg>, ctx: &mut Context<Msg>) -> Result<(), EntityError> {
        match event.payload {
            Msg::StorageRead(req) => {
                if req.flow.src != Endpoint::Storage {
                    return Err("storage read must originate at the storage endpoint".into());
                }
                self.requests += 1;
                self.bits_read += req.size_bits;
                ctx.send(self.controller, 0.0, Msg::TransmitPacket(req))?;
                Ok(())
            }
            Msg::StorageWrite(req) => {
                if req.flow.dst != Endpoint::Storage {
                    return Err("storage write must target the storage endpoint".into());
                }
                self.requests += 1;
                self.bits_written += req.size_bits;
                ctx.send(self.controller, 0.0, Msg::TransmitPacket(req))?;
                Ok(())
            }
            other => Err(format!("storage cannot handle {}", other.tag()).into()),
        }
    }
}
