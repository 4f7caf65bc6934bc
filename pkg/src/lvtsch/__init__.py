"""Local Voting and OTF cell scheduling for IEEE 802.15.4e TSCH networks."""
