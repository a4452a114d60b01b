use serde::Serialize;

use super::{Action, CapabilityMatrix, Resource, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MenuItem {
    pub key: &'static str,
    pub label: &'static str,
    pub route: &'static str,
    /// Actions the role holds on the menu's resource, empty for plain pages.
    pub actions: Vec<Action>,
}

/// Menu entry and the resource whose `List` right makes it visible.
const GATED: [(&str, &str, &str, Resource); 7] = [
    ("users", "Users", "/users", Resource::User),
    ("patients", "Patients", "/patients", Resource::Patient),
    ("referrals", "Referral Letters", "/referrals", Resource::Referral),
    ("medical_support", "Medical Support", "/medical-support", Resource::LabResult),
    ("transactions", "Transactions", "/transactions", Resource::TransactionItem),
    ("references", "Reference", "/references", Resource::ReferenceItem),
    ("dashboard", "Dashboard", "/dashboard", Resource::Dashboard),
];

fn plain(key: &'static str, label: &'static str, route: &'static str) -> MenuItem {
    MenuItem {
        key,
        label,
        route,
        actions: Vec::new(),
    }
}

/// Navigation for a role, or for an anonymous visitor when `role` is `None`.
///
/// Dashboard shows with `Read Dashboard`; the list menus show with `List` on
/// their resource.
pub fn menu_for(role: Option<Role>, matrix: &CapabilityMatrix) -> Vec<MenuItem> {
    let Some(role) = role else {
        return vec![
            plain("home", "Home", "/"),
            plain("login", "Login", "/login"),
            plain("user_guide", "User Guide", "/guide"),
            plain("faq", "FAQ", "/faq"),
        ];
    };
    let actions_on = |res: Resource| -> Vec<Action> {
        Action::ALL
            .into_iter()
            .filter(|a| matrix.scope(role, *a, res).is_some())
            .collect()
    };
    let gated = |key: &str| -> Option<MenuItem> {
        let &(key, label, route, res) = GATED.iter().find(|g| g.0 == key)?;
        let actions = actions_on(res);
        let visible = if res == Resource::Dashboard {
            actions.contains(&Action::Read)
        } else {
            actions.contains(&Action::List)
        };
        visible.then_some(MenuItem {
            key,
            label,
            route,
            actions,
        })
    };

    let mut items = vec![plain("home", "Home", "/")];
    items.extend(
        [
            "dashboard",
            "users",
            "patients",
            "referrals",
            "medical_support",
            "transactions",
            "references",
        ]
        .into_iter()
        .filter_map(gated),
    );
    items.push(plain("user_guide", "User Guide", "/guide"));
    items.push(plain("faq", "FAQ", "/faq"));
    items.push(plain("logout", "Logout", "/logout"));
    items
}
