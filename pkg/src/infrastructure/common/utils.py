import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Optional

class JsonFile:
    """Utilitas baca/tulis file JSON (manifest, summary, metadata sweep)."""
    @staticmethod
    def load(path: Path) -> Optional[Any]:
        if not path.exists():
            return None
        try:
            logging.debug(f"📄 Memuat JSON: {path.name}")
            return json.loads(path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as e:
            logging.warning(f"⚠️ JSON tidak valid ({path.name}): {e}")
            return None

    @staticmethod
    def save(data: Any, path: Path) -> None:
        """Menulis JSON terurut; OSError diteruskan agar pemanggil bisa keluar dengan kode I/O."""
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False, default=str) + "\n", encoding='utf-8')
            logging.debug(f"💾 Disimpan: {path.name}")
        except OSError as e:
            logging.error(f"❌ Gagal menyimpan JSON ({path.name}): {e}")
            raise

def file_hash(path: Path) -> str:
    """SHA-256 isi file (16 hex pertama), dipakai sebagai hash konfigurasi."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
