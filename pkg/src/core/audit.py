# src/core/audit.py
import logging

logger = logging.getLogger("audit")

def audit_log(
    action: str,
    entity: str,
    entity_id: int | str,
    metadata: dict | None = None,
):
    logger.info(
        "AUDIT | %s | %s:%s | %s",
        action,
        entity,
        entity_id,
        metadata or {},
    )
