//! Entity kinds and their canonical staged schemas.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::value::FieldType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    ServiceOrder,
    ProvisioningEvent,
    InvoiceLine,
    PaymentSettlement,
    PurchaseOrder,
    Receiving,
    Issuance,
    Installation,
    InventoryMovement,
}

/// One field of a canonical schema. `event_date` is implicit in every
/// schema and is not listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldDef {
    pub name: &'static str,
    pub ty: FieldType,
    pub required: bool,
}

const fn key(name: &'static str) -> FieldDef {
    FieldDef {
        name,
        ty: FieldType::Str,
        required: true,
    }
}

const fn opt(name: &'static str, ty: FieldType) -> FieldDef {
    FieldDef {
        name,
        ty,
        required: false,
    }
}

const fn req(name: &'static str, ty: FieldType) -> FieldDef {
    FieldDef {
        name,
        ty,
        required: true,
    }
}

use FieldType::{Bool, Integer, Number, Str};

const SERVICE_ORDER: &[FieldDef] = &[
    key("order_id"),
    key("subscriber_id"),
    key("location_id"),
    opt("status", Str),
    opt("plan", Str),
];
const PROVISIONING_EVENT: &[FieldDef] = &[
    key("order_id"),
    key("circuit_id"),
    key("account_id"),
    key("subscriber_id"),
    key("location_id"),
    opt("status", Str),
    opt("trial", Bool),
];
const INVOICE_LINE: &[FieldDef] = &[
    key("invoice_id"),
    opt("order_id", Str),
    key("account_id"),
    key("subscriber_id"),
    opt("location_id", Str),
    req("amount", Number),
];
const PAYMENT_SETTLEMENT: &[FieldDef] = &[
    key("payment_ref"),
    key("invoice_id"),
    key("subscriber_id"),
    opt("location_id", Str),
    opt("amount", Number),
];
const PURCHASE_ORDER: &[FieldDef] = &[
    key("po_id"),
    key("material_code"),
    key("location_id"),
    opt("quantity", Integer),
];
const RECEIVING: &[FieldDef] = &[
    key("receipt_id"),
    key("po_id"),
    key("material_code"),
    key("location_id"),
    req("quantity", Integer),
];
const ISSUANCE: &[FieldDef] = &[
    key("issue_id"),
    key("po_id"),
    key("material_code"),
    key("location_id"),
    req("quantity", Integer),
];
const INSTALLATION: &[FieldDef] = &[
    key("install_id"),
    key("po_id"),
    key("material_code"),
    key("location_id"),
    opt("quantity", Integer),
    opt("cost", Number),
    opt("passings", Integer),
];
const INVENTORY_MOVEMENT: &[FieldDef] = &[
    key("movement_id"),
    key("material_code"),
    key("location_id"),
    req("quantity", Integer),
];

impl EntityKind {
    pub const ALL: [EntityKind; 9] = [
        EntityKind::ServiceOrder,
        EntityKind::ProvisioningEvent,
        EntityKind::InvoiceLine,
        EntityKind::PaymentSettlement,
        EntityKind::PurchaseOrder,
        EntityKind::Receiving,
        EntityKind::Issuance,
        EntityKind::Installation,
        EntityKind::InventoryMovement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::ServiceOrder => "service_order",
            EntityKind::ProvisioningEvent => "provisioning_event",
            EntityKind::InvoiceLine => "invoice_line",
            EntityKind::PaymentSettlement => "payment_settlement",
            EntityKind::PurchaseOrder => "purchase_order",
            EntityKind::Receiving => "receiving",
            EntityKind::Issuance => "issuance",
            EntityKind::Installation => "installation",
            EntityKind::InventoryMovement => "inventory_movement",
        }
    }

    /// Canonical fields, excluding the implicit `event_date`.
    pub fn schema(self) -> &'static [FieldDef] {
        match self {
            EntityKind::ServiceOrder => SERVICE_ORDER,
            EntityKind::ProvisioningEvent => PROVISIONING_EVENT,
            EntityKind::InvoiceLine => INVOICE_LINE,
            EntityKind::PaymentSettlement => PAYMENT_SETTLEMENT,
            EntityKind::PurchaseOrder => PURCHASE_ORDER,
            EntityKind::Receiving => RECEIVING,
            EntityKind::Issuance => ISSUANCE,
            EntityKind::Installation => INSTALLATION,
            EntityKind::InventoryMovement => INVENTORY_MOVEMENT,
        }
    }

    pub fn field(self, name: &str) -> Option<&'static FieldDef> {
        self.schema().iter().find(|f| f.name == name)
    }

    pub fn field_type(self, name: &str) -> Option<FieldType> {
        if name == "event_date" {
            return Some(FieldType::Date);
        }
        self.field(name).map(|f| f.ty)
    }

    /// Fields that identify one business document; exact repeats of these are
    /// duplicates.
    pub fn natural_key(self) -> &'static [&'static str] {
        match self {
            EntityKind::ServiceOrder => &["order_id"],
            EntityKind::ProvisioningEvent => &["order_id", "circuit_id"],
            EntityKind::InvoiceLine => &["invoice_id"],
            EntityKind::PaymentSettlement => &["payment_ref"],
            EntityKind::PurchaseOrder => &["po_id", "material_code"],
            EntityKind::Receiving => &["receipt_id"],
            EntityKind::Issuance => &["issue_id"],
            EntityKind::Installation => &["install_id"],
            EntityKind::InventoryMovement => &["movement_id"],
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown entity kind `{0}`")]
pub struct UnknownEntityKind(pub String);

impl FromStr for EntityKind {
    type Err = UnknownEntityKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownEntityKind(String::from(s)))
    }
}
