#
# Copyright 2025 University of Southern California
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
import os
import logging
from datetime import datetime
from zoneinfo import ZoneInfo
from logging import StreamHandler
from logging.handlers import SysLogHandler, TimedRotatingFileHandler
from pythonjsonlogger import json
from tzlocal import get_localzone_name

logger = logging.getLogger(__name__)


def init_audit_logger(filename="mvgames-audit.log", use_syslog=False):
    # repeated create_app() calls in one process must not stack handlers
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    log_handler = StreamHandler()
    syslog_socket = "/dev/log"
    if use_syslog and (os.path.exists(syslog_socket) and os.access(syslog_socket, os.W_OK)):
        try:
            log_handler = SysLogHandler(address=syslog_socket, facility=SysLogHandler.LOG_LOCAL1)
            log_handler.ident = "mvgames-audit: "
        except Exception as e:
            logging.getLogger(__name__).warning(f"Syslog audit handler unavailable, using file handler: {e}")
            use_syslog = False

    if not use_syslog:
        try:
            log_handler = TimedRotatingFileHandler(filename=filename, when="D", interval=1, backupCount=0)
        except Exception as e:
            logging.getLogger(__name__).warning(f"Audit log file {filename} unavailable, using stream handler: {e}")

    formatter = json.JsonFormatter("{message}", style="{", rename_fields={"message": "event"})
    log_handler.setFormatter(formatter)
    logger.addHandler(log_handler)
    logger.setLevel(logging.INFO)
    logger.propagate = False


def audit_event(event, **kwargs):
    log_entry = {
        "event": event,
        "timestamp": datetime.now(ZoneInfo(get_localzone_name())).isoformat(),
        **kwargs
    }
    logger.info(log_entry)
