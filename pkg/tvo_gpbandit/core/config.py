from pathlib import Path

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # logging
    LOG: str = "WARNING"
    DEV_LOGS: bool = False

    # experiment runner
    JOBS: int = 1
    OUT_DIR: Path = Path("runs")

    @property
    def log_level(self) -> str:
        return self.LOG.upper()

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="TVO_GPBANDIT_",
        case_sensitive=True,
        extra="ignore",
    )


load_dotenv()

settings = Settings()
