import re
import shutil
import logging
from pathlib import Path
from datetime import datetime
from logging.config import dictConfig

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
DAY_FOLDER = re.compile(r"^\d{4}-\d{2}-\d{2}$")


def configure_logging(log_dir:str|Path, running_file:str, command:str="", level:str="INFO") -> logging.Logger:
    """
      File log at DEBUG, console at `level`. One file per hour and command:
      <log_dir>/<HH>[-<command>].log
    """
    suffix = f"-{command}" if command else ""
    fname = Path(log_dir) / f"{datetime.now():%H}{suffix}.log"
    dictConfig({
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {'runFormatter': {'format': LOG_FORMAT}},
        'handlers': {
            'runFile': {'class': 'logging.FileHandler', 'level': 'DEBUG', 'formatter': 'runFormatter',
                        'filename': str(fname), 'mode': 'a'},
            'console': {'class': 'logging.StreamHandler', 'level': level, 'formatter': 'runFormatter',
                        'stream': 'ext://sys.stderr'},
        },
        'root': {'level': 'DEBUG', 'handlers': ['runFile', 'console']},
    })
    return logging.getLogger(running_file)


def archive_old_days(base_log_dir:Path, today:str) -> list[Path]:
    """Moves every day folder other than `today` under archive/; returns the moved folders."""
    archive = base_log_dir / 'archive'
    archive.mkdir(parents=True, exist_ok=True)
    moved = []
    for folder in sorted(base_log_dir.iterdir()):
        if not folder.is_dir() or folder.name == today or not DAY_FOLDER.match(folder.name):
            continue
        if (archive / folder.name).exists():
            # day already archived by an earlier run; merge into it
            for item in folder.iterdir():
                shutil.move(str(item), str(archive / folder.name / item.name))
            folder.rmdir()
        else:
            shutil.move(str(folder), str(archive))
        moved.append(archive / folder.name)
    return moved


def setup_logdir_by_currentdate(env_suffix:str="", base_dir:str="logs") -> str:
    base_log_dir = Path(f"{base_dir}_{env_suffix}" if env_suffix else base_dir)
    today = f"{datetime.now():%Y-%m-%d}"
    today_log_dir = base_log_dir / today
    if not today_log_dir.exists():
        base_log_dir.mkdir(parents=True, exist_ok=True)
        archive_old_days(base_log_dir, today)
        today_log_dir.mkdir()
    return str(today_log_dir)
