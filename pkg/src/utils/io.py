import os
import tempfile
from typing import Union


def atomic_write(path: str, data: Union[str, bytes]) -> str:
    """
    原子写入：先写到同目录下的临时文件，再 os.replace 到目标路径。

    Returns:
        目标文件的绝对路径
    """
    path = os.path.abspath(path)
    directory = os.path.dirname(path)
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        if mode == "wb":
            with os.fdopen(fd, "wb") as f:
                f.write(data)
        else:
            # newline="" 保证各平台字节一致
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    return path
