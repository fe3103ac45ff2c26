"""Programmable wireless environment simulator and configuration service."""
