import os
import platform

import psutil


def worker_count(limit=None):
    """Number of workers for repetition sweeps: physical cores, capped by DFT_WORKERS"""
    cores = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    env_cap = os.getenv("DFT_WORKERS")
    if env_cap:
        cores = min(cores, max(1, int(env_cap)))
    if limit is not None:
        cores = min(cores, max(1, limit))
    return cores


def host_info():
    """Host description recorded in run manifests"""
    mem = psutil.virtual_memory()
    return {
        "os": f"{platform.system()} {platform.release()}",
        "python": platform.python_version(),
        "hostname": platform.node(),
        "cpu_logical": psutil.cpu_count(),
        "cpu_physical": psutil.cpu_count(logical=False),
        "memory_gb": round(mem.total / 1024**3, 1),
    }


def process_rss_mb():
    """Resident memory of this process in MB"""
    return round(psutil.Process().memory_info().rss / 1024**2, 1)
