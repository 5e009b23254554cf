//! Event payloads exchanged by the simulation entities.

use crate::bigdata::{ExecuteTask, FinishedTask, UtilizationRecord, VmRequest};
use crate::ids::{JobId, VmId};
use crate::kernel::EventTag;
use crate::network::{Delivery, TransmitRequest};
use crate::topology::NodeIx;

#[derive(Clone, Debug, PartialEq)]
pub enum Msg {
    TransmitPacket(TransmitRequest),
    ControllerTick { generation: u64 },
    VmPlaced { vm: VmId, host: NodeIx },
    PacketDelivered(Delivery),

    StorageRead(TransmitRequest),
    StorageWrite(TransmitRequest),

    AppStart,
    JobSubmit(JobId),
    VmRequest(VmRequest),
    VmGranted { vms: Vec<VmId> },
    VmRelease { vms: Vec<VmId> },
    ApplicationFinished,
    Shutdown,

    ExecuteTask(ExecuteTask),
    NodeTick { generation: u64 },
    TaskDone(FinishedTask),
    Heartbeat,
    HeartbeatReport(UtilizationRecord),
}

impl EventTag for Msg {
    fn tag(&self) -> &'static str {
        match self {
            Msg::TransmitPacket(_) => "TRANSMIT_PACKET",
            Msg::ControllerTick { .. } => "PACKET_COMPLETE",
            Msg::VmPlaced { .. } => "VM_PLACED",
            Msg::PacketDelivered(_) => "PACKET_DELIVERED",
            Msg::StorageRead(_) => "STORAGE_READ",
            Msg::StorageWrite(_) => "STORAGE_WRITE",
            Msg::AppStart => "APP_START",
            Msg::JobSubmit(_) => "JOB_SUBMIT",
            Msg::VmRequest(_) => "VM_REQUEST",
            Msg::VmGranted { .. } => "VM_GRANTED",
            Msg::VmRelease { .. } => "VM_RELEASE",
            Msg::ApplicationFinished => "APP_FINISHED",
            Msg::Shutdown => "SHUTDOWN",
            Msg::ExecuteTask(_) => "EXECUTE_TASK",
            Msg::NodeTick { .. } => "TASK_PROGRESS",
            Msg::TaskDone(_) => "TASK_DONE",
            Msg::Heartbeat => "HEARTBEAT",
            Msg::HeartbeatReport(_) => "HEARTBEAT_REPORT",
        }
    }
}
